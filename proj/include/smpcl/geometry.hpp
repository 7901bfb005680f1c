#pragma once

#include <utility>
#include <vector>

#include "smpcl/image.hpp"
#include "smpcl/tensor.hpp"

namespace smpcl {

/// Inclusive pixel box for one class.
struct BBox {
  int cls = 0;
  int min_row = 0;
  int min_col = 0;
  int max_row = 0;
  int max_col = 0;

  bool contains(int r, int c) const {
    return r >= min_row && r <= max_row && c >= min_col && c <= max_col;
  }
  bool contains(const BBox& other) const {
    return other.min_row >= min_row && other.max_row <= max_row && other.min_col >= min_col &&
           other.max_col <= max_col;
  }
  bool operator==(const BBox&) const = default;
};

using Pixel = std::pair<int, int>;  // (row, col)

/// Outer boundary of one 8-connected component, in tracing order.
struct Contour {
  int cls = 0;
  std::vector<Pixel> points;
};

/// 8-connected component ids (1-based, raster order of first pixel); 0 is background.
Grid<int> label_components(const BinaryMap& mask, int* count = nullptr);

/// Moore-neighbour trace of the component containing `start`, which must be
/// the component's first pixel in raster order.
std::vector<Pixel> trace_contour(const BinaryMap& mask, Pixel start);

/// One contour per 8-connected component of `mask`.
std::vector<Contour> extract_contours(const BinaryMap& mask, int cls);

/// Hard labels: argmax over axis 0 of a (K,H,W) map, or kUnlabeled where the
/// winning probability is below `tau`.
template <typename T>
LabelMap hard_labels(const Tensor<T>& probs, double tau = 0.0);

/// Tight box over `pixels`; returns false when the list is empty.
bool bounding_box(const std::vector<Pixel>& pixels, int cls, BBox& out);

/// One box per foreground class: the tight box over the traced contours of
/// the predicted class region plus that class's scribble pixels. Classes with
/// neither emit nothing. Boxes are sorted by class.
template <typename T>
std::vector<BBox> extract_bboxes(const Tensor<T>& probs, const LabelMap& scribbles,
                                 double tau = 0.5);

}  // namespace smpcl
