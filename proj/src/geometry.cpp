#include "smpcl/geometry.hpp"

#include <algorithm>
#include <deque>

namespace smpcl {

namespace {

// Clockwise ring starting west: W, NW, N, NE, E, SE, S, SW.
constexpr int kRingRow[8] = {0, -1, -1, -1, 0, 1, 1, 1};
constexpr int kRingCol[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

int ring_index(int dr, int dc) {
  for (int i = 0; i < 8; ++i) {
    if (kRingRow[i] == dr && kRingCol[i] == dc) return i;
  }
  throw std::logic_error("contour tracing: backtrack is not a neighbour");
}

}  // namespace

Grid<int> label_components(const BinaryMap& mask, int* count) {
  Grid<int> ids(mask.height(), mask.width(), 0);
  int next = 0;
  std::deque<Pixel> queue;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c) || ids.at(r, c)) continue;
      ids.at(r, c) = ++next;
      queue.emplace_back(r, c);
      while (!queue.empty()) {
        const auto [pr, pc] = queue.front();
        queue.pop_front();
        for (int i = 0; i < 8; ++i) {
          const int qr = pr + kRingRow[i], qc = pc + kRingCol[i];
          if (mask.contains(qr, qc) && mask.at(qr, qc) && !ids.at(qr, qc)) {
            ids.at(qr, qc) = next;
            queue.emplace_back(qr, qc);
          }
        }
      }
    }
  }
  if (count) *count = next;
  return ids;
}

std::vector<Pixel> trace_contour(const BinaryMap& mask, Pixel start) {
  if (!mask.contains(start.first, start.second) || !mask.at(start.first, start.second)) {
    throw ShapeError("contour start is not a region pixel");
  }
  auto inside = [&](int r, int c) { return mask.contains(r, c) && mask.at(r, c); };

  std::vector<Pixel> points{start};
  Pixel p = start, back{start.first, start.second - 1};
  // Done once start is followed by the second point again; the cap only guards malformed input.
  const std::size_t cap = 4 * mask.size() + 8;
  for (std::size_t step = 0; step < cap; ++step) {
    const int from = ring_index(back.first - p.first, back.second - p.second);
    Pixel prev = back, next{-1, -1};
    bool found = false;
    for (int i = 1; i <= 8; ++i) {
      const int d = (from + i) % 8;
      const Pixel q{p.first + kRingRow[d], p.second + kRingCol[d]};
      if (inside(q.first, q.second)) {
        next = q;
        found = true;
        break;
      }
      prev = q;
    }
    if (!found) return points;  // isolated pixel
    if (p == start && points.size() > 1 && next == points[1]) {
      points.pop_back();
      break;
    }
    back = prev;
    p = next;
    points.push_back(p);
  }
  return points;
}

std::vector<Contour> extract_contours(const BinaryMap& mask, int cls) {
  int count = 0;
  const auto ids = label_components(mask, &count);
  std::vector<Contour> out;
  out.reserve(static_cast<std::size_t>(count));
  int seen = 0;
  for (int r = 0; r < mask.height() && seen < count; ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (ids.at(r, c) == seen + 1) {
        out.push_back({cls, trace_contour(mask, {r, c})});
        ++seen;
      }
    }
  }
  return out;
}

template <typename T>
LabelMap hard_labels(const Tensor<T>& probs, double tau) {
  if (probs.rank() != 3) throw ShapeError("hard_labels: expected (K,H,W), got " + shape_str(probs.shape()));
  const std::size_t k = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
  LabelMap out(static_cast<int>(probs.dim(1)), static_cast<int>(probs.dim(2)));
  const auto v = probs.data();
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (v[c * plane + i] > v[best * plane + i]) best = c;
    }
    out[i] = static_cast<double>(v[best * plane + i]) >= tau ? static_cast<std::uint8_t>(best)
                                                             : kUnlabeled;
  }
  return out;
}

bool bounding_box(const std::vector<Pixel>& pixels, int cls, BBox& out) {
  if (pixels.empty()) return false;
  out = {cls, pixels[0].first, pixels[0].second, pixels[0].first, pixels[0].second};
  for (const auto& [r, c] : pixels) {
    out.min_row = std::min(out.min_row, r);
    out.max_row = std::max(out.max_row, r);
    out.min_col = std::min(out.min_col, c);
    out.max_col = std::max(out.max_col, c);
  }
  return true;
}

template <typename T>
std::vector<BBox> extract_bboxes(const Tensor<T>& probs, const LabelMap& scribbles, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("box threshold must lie in (0,1)");
  const auto labels = hard_labels(probs, tau);
  if (!scribbles.same_size(labels)) {
    throw ShapeError("extract_bboxes: scribbles and prediction differ in size");
  }
  const int k = static_cast<int>(probs.dim(0));
  scribbles.validate(k);
  std::vector<BBox> boxes;
  for (int cls = 1; cls < k; ++cls) {
    std::vector<Pixel> pixels;
    for (const auto& contour : extract_contours(labels.mask(cls), cls)) {
      pixels.insert(pixels.end(), contour.points.begin(), contour.points.end());
    }
    for (int r = 0; r < scribbles.height(); ++r) {
      for (int c = 0; c < scribbles.width(); ++c) {
        if (scribbles.at(r, c) == cls) pixels.emplace_back(r, c);
      }
    }
    BBox box;
    if (bounding_box(pixels, cls, box)) boxes.push_back(box);
  }
  return boxes;
}

template LabelMap hard_labels<float>(const Tensor<float>&, double);
template LabelMap hard_labels<double>(const Tensor<double>&, double);
template std::vector<BBox> extract_bboxes<float>(const Tensor<float>&, const LabelMap&, double);
template std::vector<BBox> extract_bboxes<double>(const Tensor<double>&, const LabelMap&, double);

}  // namespace smpcl
