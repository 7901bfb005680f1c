#include "smpcl/scan_orders.hpp"

#include <algorithm>

#include "smpcl/error.hpp"
#include "smpcl/log.hpp"

namespace smpcl {

std::string to_string(ScanDirection d) {
  switch (d) {
    case ScanDirection::kRowMajor: return "row_major";
    case ScanDirection::kColumnMajor: return "column_major";
    case ScanDirection::kReverseRowMajor: return "reverse_row_major";
    case ScanDirection::kReverseColumnMajor: return "reverse_column_major";
  }
  return "?";
}

namespace {

// Traverses the subgrid {(r,c): r = r0 + i*step, c = c0 + j*step} in `dir`.
std::vector<std::uint32_t> traverse(int height, int width, int r0, int c0, int step,
                                    ScanDirection dir) {
  std::vector<std::uint32_t> out;
  const bool column_first =
      dir == ScanDirection::kColumnMajor || dir == ScanDirection::kReverseColumnMajor;
  auto flat = [&](int r, int c) { return static_cast<std::uint32_t>(r * width + c); };
  if (column_first) {
    for (int c = c0; c < width; c += step) {
      for (int r = r0; r < height; r += step) out.push_back(flat(r, c));
    }
  } else {
    for (int r = r0; r < height; r += step) {
      for (int c = c0; c < width; c += step) out.push_back(flat(r, c));
    }
  }
  if (dir == ScanDirection::kReverseRowMajor || dir == ScanDirection::kReverseColumnMajor) {
    std::reverse(out.begin(), out.end());
  }
  return out;
}

void check_extent(int height, int width) {
  if (height < 1 || width < 1) {
    throw ShapeError("scan grid must be at least 1x1, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

}  // namespace

std::array<ScanOrder, 4> ss2d_orders(int height, int width) {
  check_extent(height, width);
  std::array<ScanOrder, 4> orders;
  for (int d = 0; d < 4; ++d) {
    const auto dir = static_cast<ScanDirection>(d);
    orders[d].indices = traverse(height, width, 0, 0, 1, dir);
    orders[d].direction = dir;
  }
  return orders;
}

std::vector<ScanOrder> sparse_orders(int height, int width, int step) {
  check_extent(height, width);
  if (step < 1) throw ShapeError("skip step must be >= 1");
  std::vector<ScanOrder> orders;
  orders.reserve(static_cast<std::size_t>(step) * step);
  int empty = 0;
  for (int r0 = 0; r0 < step; ++r0) {
    for (int c0 = 0; c0 < step; ++c0) {
      ScanOrder o;
      o.direction = static_cast<ScanDirection>((r0 * step + c0) % 4);
      o.step = step;
      o.row_offset = r0;
      o.col_offset = c0;
      if (r0 < height && c0 < width) {
        o.indices = traverse(height, width, r0, c0, step, o.direction);
      } else {
        ++empty;
      }
      orders.push_back(std::move(o));
    }
  }
  if (empty > 0) {
    warn("skip step " + std::to_string(step) + " exceeds grid " + std::to_string(height) + "x" +
         std::to_string(width) + "; " + std::to_string(empty) + " scan groups are empty");
  }
  return orders;
}

template <typename T>
Tensor<T> gather_seq(const Tensor<T>& features, const ScanOrder& order) {
  if (features.rank() != 3) throw ShapeError("gather_seq: expected (C,H,W)");
  return gather_rows(flatten_to_sequence(features), order.indices);
}

template <typename T>
Tensor<T> scatter_seq(const std::vector<Tensor<T>>& seqs, const std::vector<ScanOrder>& orders,
                      std::size_t height, std::size_t width, Accumulate mode) {
  if (seqs.size() != orders.size() || seqs.empty()) {
    throw ShapeError("scatter_seq: need one order per sequence");
  }
  std::vector<std::span<const std::uint32_t>> idx;
  for (const auto& o : orders) idx.emplace_back(o.indices);
  return sequence_to_grid(scatter_rows(seqs, idx, height * width, mode), height, width);
}

template Tensor<float> gather_seq<float>(const Tensor<float>&, const ScanOrder&);
template Tensor<double> gather_seq<double>(const Tensor<double>&, const ScanOrder&);
template Tensor<float> scatter_seq<float>(const std::vector<Tensor<float>>&,
                                          const std::vector<ScanOrder>&, std::size_t, std::size_t,
                                          Accumulate);
template Tensor<double> scatter_seq<double>(const std::vector<Tensor<double>>&,
                                            const std::vector<ScanOrder>&, std::size_t,
                                            std::size_t, Accumulate);

}  // namespace smpcl
