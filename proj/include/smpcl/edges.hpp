#pragma once

#include "smpcl/image.hpp"

namespace smpcl {

enum class EdgeMethod { kSobel, kCanny };

struct EdgeParams {
  EdgeMethod method = EdgeMethod::kCanny;
  // Sobel: edge where gradient magnitude exceeds this.
  double sobel_threshold = 0.5;
  // Canny: Gaussian pre-blur and hysteresis thresholds on gradient magnitude.
  double sigma = 1.0;
  double low = 0.1;
  double high = 0.2;
};

/// Unnormalized 3x3 Sobel magnitude (a unit step reads 4), replicated borders.
Grid<double> sobel_magnitude(const Grid<double>& image);

/// Gaussian blur, kernel truncated at 4 sigma, replicated borders.
Grid<double> gaussian_blur(const Grid<double>& image, double sigma);

/// Binary edge map F. Image values must lie in [0,1].
BinaryMap detect_edges(const GrayImage& image, const EdgeParams& params = {});

}  // namespace smpcl
