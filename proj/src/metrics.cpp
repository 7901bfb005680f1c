#include "smpcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smpcl/error.hpp"

namespace smpcl {

namespace {

void require_same(const LabelMap& a, const LabelMap& b) {
  if (!a.same_size(b)) {
    throw ShapeError("metric inputs differ in size: " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

// 1D lower envelope of parabolas over f (Felzenszwalb & Huttenlocher).
void envelope_1d(const double* f, std::size_t n, double* out, std::vector<int>& v,
                 std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double fq = f[q] + double(q) * double(q);
    while (k >= 0) {
      const int p = v[k];
      const double s = (fq - (f[p] + double(p) * double(p))) / (2.0 * (double(q) - p));
      if (s > z[k]) {
        ++k;
        v[k] = static_cast<int>(q);
        z[k] = s;
        z[k + 1] = inf;
        break;
      }
      --k;
    }
    if (k < 0) {
      k = 0;
      v[0] = static_cast<int>(q);
      z[0] = -inf;
      z[1] = inf;
    }
  }
  if (k < 0) {
    std::fill(out, out + n, inf);
    return;
  }
  int j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[j + 1] < double(q)) ++j;
    const double d = double(q) - v[j];
    out[q] = d * d + f[v[j]];
  }
}

double nearest_rank_95(std::vector<double> d) {
  std::sort(d.begin(), d.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(d.size())));
  return d[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

double dice_coefficient(const LabelMap& pred, const LabelMap& gt, int cls) {
  require_same(pred, gt);
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == cls, b = gt[i] == cls;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * double(both) / double(p + g);
}

std::string to_string(Hd95Flag f) {
  switch (f) {
    case Hd95Flag::kOk: return "ok";
    case Hd95Flag::kPredEmpty: return "pred_empty";
    case Hd95Flag::kGtEmpty: return "gt_empty";
    case Hd95Flag::kBothEmpty: return "both_empty";
  }
  return "?";
}

std::vector<std::pair<int, int>> region_boundary(const BinaryMap& region) {
  std::vector<std::pair<int, int>> out;
  const int h = region.height(), w = region.width();
  auto inside = [&](int r, int c) { return region.contains(r, c) && region.at(r, c); };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!region.at(r, c)) continue;
      if (!inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) || !inside(r, c + 1)) {
        out.emplace_back(r, c);
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(const BinaryMap& sites) {
  const std::size_t h = sites.height(), w = sites.width();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites[i] ? 0.0 : inf;
  std::vector<int> v;
  std::vector<double> z, col(h), tmp(std::max(h, w));
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = grid[r * w + c];
    envelope_1d(col.data(), h, tmp.data(), v, z);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = tmp[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    envelope_1d(grid.data() + r * w, w, tmp.data(), v, z);
    std::copy(tmp.begin(), tmp.begin() + w, grid.begin() + r * w);
  }
  return grid;
}

Hd95Result hd95(const LabelMap& pred, const LabelMap& gt, int cls, double spacing) {
  require_same(pred, gt);
  if (!(spacing > 0.0)) throw ValidationError("pixel spacing must be positive");
  const BinaryMap p = pred.mask(cls), g = gt.mask(cls);
  const bool pe = p.count() == 0, ge = g.count() == 0;
  if (pe && ge) return {0.0, Hd95Flag::kBothEmpty};
  if (pe || ge) {
    const double diag = std::hypot(double(pred.height()), double(pred.width()));
    return {diag * spacing, pe ? Hd95Flag::kPredEmpty : Hd95Flag::kGtEmpty};
  }
  const auto bp = region_boundary(p), bg = region_boundary(g);
  auto directed = [&](const std::vector<std::pair<int, int>>& from,
                      const std::vector<std::pair<int, int>>& to) {
    BinaryMap sites(pred.height(), pred.width());
    for (auto [r, c] : to) sites.at(r, c) = 1;
    const auto dt = squared_distance_transform(sites);
    std::vector<double> d;
    d.reserve(from.size());
    for (auto [r, c] : from) d.push_back(std::sqrt(dt[std::size_t(r) * pred.width() + c]));
    return nearest_rank_95(std::move(d));
  };
  return {std::max(directed(bp, bg), directed(bg, bp)) * spacing, Hd95Flag::kOk};
}

}  // namespace smpcl
