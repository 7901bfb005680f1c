#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smpcl/ops.hpp"
#include "smpcl/random.hpp"

namespace smpcl {

/// Learnable parameters of one selective state-space layer over D channels
/// with N-dimensional state per channel.
template <typename T>
struct S6Params {
  Tensor<T> a_log;    // (D,N); A = -exp(a_log) < 0
  Tensor<T> w_delta;  // (D,D)
  Tensor<T> b_delta;  // (D)
  Tensor<T> w_b;      // (D,N)
  Tensor<T> w_c;      // (D,N)
  Tensor<T> d_skip;   // (D)

  std::size_t channels() const { return d_skip.dim(0); }
  std::size_t state_size() const { return a_log.dim(1); }

  /// A = -(1..N) per channel; softplus(b_delta) log-uniform in [0.01, 0.1].
  static S6Params init(std::size_t channels, std::size_t state_size, Rng& rng);

  std::vector<Tensor<T>> parameters() const;
  std::vector<std::string> names() const;
};

/// Fused selective scan. For each channel d, with h_0 = 0:
///   h_t = exp(delta[t,d] * A[d,:]) * h_{t-1} + delta[t,d] * B[t,:] * x[t,d]
///   y[t,d] = <C[t,:], h_t> + D[d] * x[t,d]
/// x, delta: (L,D); A: (D,N); B, C: (L,N); D: (D).
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a,
                         const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& d);

/// S6 over one (L,D) sequence: delta = softplus(x W_delta + b_delta),
/// B = x W_b, C = x W_c, then selective_scan. Throws DomainError on
/// non-finite parameters.
template <typename T>
Tensor<T> s6_forward(const Tensor<T>& seq, const S6Params<T>& params);

/// Max relative error of tape gradients against central finite differences
/// for loss = sum(s6_forward(x)), over x and every parameter (64-bit).
double s6_gradcheck(std::size_t length, std::size_t channels, std::size_t state_size,
                    std::uint64_t seed);

}  // namespace smpcl
