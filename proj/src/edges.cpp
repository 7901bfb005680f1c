#include "smpcl/edges.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <string>

namespace smpcl {

namespace {

double sample(const Grid<double>& g, int r, int c) {
  r = std::clamp(r, 0, g.height() - 1);
  c = std::clamp(c, 0, g.width() - 1);
  return g.at(r, c);
}

struct Gradients {
  Grid<double> gx, gy, mag;
};

Gradients sobel(const Grid<double>& img) {
  const int h = img.height(), w = img.width();
  Gradients g{Grid<double>(h, w), Grid<double>(h, w), Grid<double>(h, w)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double tl = sample(img, r - 1, c - 1), tc = sample(img, r - 1, c),
                   tr = sample(img, r - 1, c + 1);
      const double ml = sample(img, r, c - 1), mr = sample(img, r, c + 1);
      const double bl = sample(img, r + 1, c - 1), bc = sample(img, r + 1, c),
                   br = sample(img, r + 1, c + 1);
      const double gx = (tr + 2 * mr + br) - (tl + 2 * ml + bl);
      const double gy = (bl + 2 * bc + br) - (tl + 2 * tc + tr);
      g.gx.at(r, c) = gx;
      g.gy.at(r, c) = gy;
      g.mag.at(r, c) = std::hypot(gx, gy);
    }
  }
  return g;
}

Grid<double> to_double(const GrayImage& image) {
  Grid<double> out(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ValidationError("edge detection expects intensities in [0,1], found " +
                            std::to_string(v));
    }
    out[i] = v;
  }
  return out;
}

}  // namespace

Grid<double> sobel_magnitude(const Grid<double>& image) { return sobel(image).mag; }

Grid<double> gaussian_blur(const Grid<double>& image, double sigma) {
  if (sigma <= 0) return image;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;

  const int h = image.height(), w = image.width();
  Grid<double> tmp(h, w), out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * sample(image, r, c + i);
      tmp.at(r, c) = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * sample(tmp, r + i, c);
      out.at(r, c) = acc;
    }
  }
  return out;
}

BinaryMap detect_edges(const GrayImage& image, const EdgeParams& params) {
  const auto img = to_double(image);
  const int h = img.height(), w = img.width();
  BinaryMap edges(h, w);

  if (params.method == EdgeMethod::kSobel) {
    const auto mag = sobel_magnitude(img);
    for (std::size_t i = 0; i < mag.size(); ++i) edges[i] = mag[i] > params.sobel_threshold;
    return edges;
  }

  if (!(params.low < params.high) || params.low < 0) {
    throw ValidationError("canny thresholds must satisfy 0 <= low < high");
  }
  const auto g = sobel(gaussian_blur(img, params.sigma));

  // Non-maximum suppression along the quantized gradient direction.
  Grid<double> thin(h, w, 0.0);
  auto mag_at = [&](int r, int c) { return g.mag.contains(r, c) ? g.mag.at(r, c) : 0.0; };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = g.mag.at(r, c);
      if (m <= 0) continue;
      double angle = std::atan2(g.gy.at(r, c), g.gx.at(r, c)) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      int dr, dc;
      if (angle < 22.5 || angle >= 157.5) {
        dr = 0, dc = 1;
      } else if (angle < 67.5) {
        dr = 1, dc = 1;
      } else if (angle < 112.5) {
        dr = 1, dc = 0;
      } else {
        dr = 1, dc = -1;
      }
      if (m >= mag_at(r + dr, c + dc) && m >= mag_at(r - dr, c - dc)) thin.at(r, c) = m;
    }
  }

  // Hysteresis: weak pixels survive when 8-connected to a strong one.
  std::deque<std::pair<int, int>> frontier;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (thin.at(r, c) >= params.high) {
        edges.at(r, c) = 1;
        frontier.emplace_back(r, c);
      }
    }
  }
  while (!frontier.empty()) {
    const auto [r, c] = frontier.front();
    frontier.pop_front();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (!edges.contains(rr, cc) || edges.at(rr, cc)) continue;
        if (thin.at(rr, cc) > 0 && thin.at(rr, cc) >= params.low) {
          edges.at(rr, cc) = 1;
          frontier.emplace_back(rr, cc);
        }
      }
    }
  }
  return edges;
}

}  // namespace smpcl
