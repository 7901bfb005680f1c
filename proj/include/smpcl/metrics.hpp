#pragma once

#include <string>
#include <vector>

#include "smpcl/image.hpp"

namespace smpcl {

/// 2|P & G| / (|P| + |G|) for class `cls`; 1 when both are empty.
double dice_coefficient(const LabelMap& pred, const LabelMap& gt, int cls);

enum class Hd95Flag { kOk, kPredEmpty, kGtEmpty, kBothEmpty };

std::string to_string(Hd95Flag f);

struct Hd95Result {
  double value = 0.0;  // millimetres
  Hd95Flag flag = Hd95Flag::kOk;
};

/// Pixels of the region with a 4-neighbour outside it (image exterior counts
/// as outside), in raster order.
std::vector<std::pair<int, int>> region_boundary(const BinaryMap& region);

/// Exact squared Euclidean distance to the nearest set pixel (separable
/// lower-envelope transform). Empty input gives +inf everywhere.
std::vector<double> squared_distance_transform(const BinaryMap& sites);

/// Symmetric nearest-rank 95th percentile of boundary-to-boundary distances,
/// times the pixel spacing. One empty region gives the image diagonal with a
/// flag; both empty give 0 with a flag.
Hd95Result hd95(const LabelMap& pred, const LabelMap& gt, int cls, double spacing = 1.0);

}  // namespace smpcl
