#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "smpcl/tensor.hpp"

namespace smpcl::test {

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = true) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(gen);
  return Tensor<double>(std::move(shape), std::move(data), requires_grad);
}

inline std::vector<double> values(const Tensor<double>& t) {
  return {t.data().begin(), t.data().end()};
}

inline std::vector<float> values(const Tensor<float>& t) {
  return {t.data().begin(), t.data().end()};
}

template <typename T>
std::vector<T> values(std::span<const T> s) {
  return {s.begin(), s.end()};
}

}  // namespace smpcl::test
