#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "smpcl/ops.hpp"

namespace smpcl {

// Direction conventions over a (sub)grid flattened row-major:
//   kRowMajor            top-left start, rows then columns
//   kColumnMajor         top-left start, columns then rows
//   kReverseRowMajor     bottom-right start, exact reverse of kRowMajor
//   kReverseColumnMajor  bottom-right start, exact reverse of kColumnMajor
enum class ScanDirection { kRowMajor, kColumnMajor, kReverseRowMajor, kReverseColumnMajor };

std::string to_string(ScanDirection d);

struct ScanOrder {
  std::vector<std::uint32_t> indices;  // flat indices r*W + c
  ScanDirection direction = ScanDirection::kRowMajor;
  int step = 1;  // 1 for dense scans
  int row_offset = 0;
  int col_offset = 0;
};

/// The four dense cross-scan orders, in ScanDirection order.
std::array<ScanOrder, 4> ss2d_orders(int height, int width);

/// Skip-sampled scan: p*p groups keyed by (row % p, col % p) in raster order
/// of the offset; group g traverses its subgrid in direction g % 4. Groups
/// are disjoint and cover every index once. Empty groups (p > extent) are
/// kept and reported through warn().
std::vector<ScanOrder> sparse_orders(int height, int width, int step = 2);

/// (C,H,W) -> (len(order), C) in scan order.
template <typename T>
Tensor<T> gather_seq(const Tensor<T>& features, const ScanOrder& order);

/// Writes each processed sequence back to its grid positions, (C,H,W) output.
template <typename T>
Tensor<T> scatter_seq(const std::vector<Tensor<T>>& seqs, const std::vector<ScanOrder>& orders,
                      std::size_t height, std::size_t width, Accumulate mode);

template <typename T>
Tensor<T> scatter_seq(const Tensor<T>& seq, const ScanOrder& order, std::size_t height,
                      std::size_t width, Accumulate mode) {
  return scatter_seq<T>(std::vector<Tensor<T>>{seq}, std::vector<ScanOrder>{order}, height, width,
                        mode);
}

}  // namespace smpcl
