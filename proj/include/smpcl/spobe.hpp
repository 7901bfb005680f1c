#pragma once

#include <string>
#include <vector>

#include "smpcl/edges.hpp"
#include "smpcl/image.hpp"

namespace smpcl {

struct SpobeConfig {
  // Strictly increasing odd dilation sizes k_1 < ... < k_j.
  std::vector<int> schedule{3, 5, 7, 9, 11};
  // Per-class gate threshold n_c. Empty: n = 2 * k_i at iteration i for every class.
  std::vector<int> class_thresholds;
  EdgeParams edges;

  int threshold(int cls, std::size_t iteration) const;
  void validate() const;
};

/// Per-class boundary pixels harvested from the edge map.
struct BoundaryMap {
  int num_classes = 0;
  // Accumulated E_c (union over iterations).
  std::vector<BinaryMap> classes;
  // history[c][i]: accumulated E_c after iteration i+1.
  std::vector<std::vector<BinaryMap>> history;
  std::vector<int> schedule;
  std::vector<std::string> warnings;

  bool empty() const;
};

/// S_{i,c}: pixels whose k x k window (clipped at borders) holds a class-c scribble.
BinaryMap dilate_class(const LabelMap& scribbles, int cls, int k);

/// U: 1 where the zero-padded k x k window sum of `boundary` is below n_c.
BinaryMap counting_map(const BinaryMap& boundary, int k, int n_c);

/// Iterative scribble propagation against a precomputed edge map F.
BoundaryMap spobe_from_edges(const BinaryMap& edges, const LabelMap& scribbles, int num_classes,
                             const SpobeConfig& config);

/// Full estimator: detect edges on `image`, then propagate.
BoundaryMap spobe(const GrayImage& image, const LabelMap& scribbles, int num_classes,
                  const SpobeConfig& config = {});

/// Adds boundary pixels to the scribbles. Original labels always win; a pixel
/// claimed by more than one class stays unlabeled.
LabelMap enrich_scribbles(const LabelMap& scribbles, const BoundaryMap& boundaries);

}  // namespace smpcl
