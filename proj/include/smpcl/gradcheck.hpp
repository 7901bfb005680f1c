#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smpcl/tensor.hpp"

namespace smpcl {

struct GradCheckOptions {
  double step = 1e-4;
  // Denominator floor for the relative error |a-n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  // 0 checks every coordinate; otherwise a seeded sample per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "tensor[i]: tape=a fd=b"
};

/// Compares tape gradients of a scalar function against central finite
/// differences. `fn` must read the tensors in `wrt` (which are perturbed in
/// place and restored bit-exactly). Leaves requires_grad set on `wrt`.
template <typename T>
GradCheckReport gradcheck(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> wrt,
                          const GradCheckOptions& options = {},
                          const std::vector<std::string>& names = {});

}  // namespace smpcl
