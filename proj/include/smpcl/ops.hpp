#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "smpcl/tensor.hpp"

// Differentiable tensor ops. Every op allocates a fresh output and, when a
// tape is active and an input requires grad, records its backward rule.
// No broadcasting except scalar-by-tensor; expand explicitly.

namespace smpcl {

// ---- layout ----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// axes[i] names the input axis that becomes output axis i.
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);

template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

/// (C,H,W) -> (H*W, C), row-major over the grid.
template <typename T>
Tensor<T> flatten_to_sequence(const Tensor<T>& x);

/// (H*W, C) -> (C,H,W). Inverse of flatten_to_sequence.
template <typename T>
Tensor<T> sequence_to_grid(const Tensor<T>& seq, std::size_t height, std::size_t width);

/// Concatenation along axis 0.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts);

/// Rows idx of a (L,C) tensor -> (n,C).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::uint32_t> idx);

enum class Accumulate { kOverwrite, kAdd };

/// Writes each (n_j,C) part to rows idx_j of a zero (L,C) tensor. With
/// kOverwrite a later part wins on a shared row; with kAdd rows sum.
template <typename T>
Tensor<T> scatter_rows(const std::vector<Tensor<T>>& parts,
                       const std::vector<std::span<const std::uint32_t>>& idx, std::size_t rows,
                       Accumulate mode);

// ---- elementwise ------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
/// s has a single element; s*x with gradient to both.
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& s, const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// (D) -> (L,D) by repeating rows.
template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& b, std::size_t rows);

/// (m,k) x (k,n) -> (m,n).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// ---- activations ------------------------------------------------------------

enum class Activation { kSilu, kRelu, kSigmoid, kSoftplus, kExp, kLog };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T>
Tensor<T> silu(const Tensor<T>& x) { return activation(x, Activation::kSilu); }
template <typename T>
Tensor<T> relu(const Tensor<T>& x) { return activation(x, Activation::kRelu); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) { return activation(x, Activation::kSigmoid); }
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) { return activation(x, Activation::kSoftplus); }
template <typename T>
Tensor<T> exp(const Tensor<T>& x) { return activation(x, Activation::kExp); }
/// Throws DomainError on non-positive input.
template <typename T>
Tensor<T> log(const Tensor<T>& x) { return activation(x, Activation::kLog); }

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes each row of an (L,C) matrix to zero mean and unit variance,
/// then applies per-column gamma (C) and beta (C).
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5));

// ---- convolution ------------------------------------------------------------

/// x: (C,H,W) or (N,C,H,W); w: (Cout,Cin,kh,kw). Cross-correlation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding);

/// x: (C,H,W) or (N,C,H,W); w: (Cin,Cout,kh,kw). Adjoint of conv2d;
/// output extent (H-1)*stride - 2*padding + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                           std::size_t padding);

/// conv2d or conv_transpose2d by flag.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding,
                 bool transposed) {
  return transposed ? conv_transpose2d(x, w, stride, padding) : conv2d(x, w, stride, padding);
}

/// Adds b[c] to every element of channel c. x: (C,H,W) or (N,C,H,W).
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b);

/// Causal depthwise convolution along the sequence axis.
/// seq: (L,C); w: (C,k); y[t,c] = sum_j w[c,j] * seq[t-k+1+j, c].
template <typename T>
Tensor<T> conv1d_depthwise(const Tensor<T>& seq, const Tensor<T>& w);

/// Bilinear resampling of (C,h,w) to (C,height,width), half-pixel centers.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t height, std::size_t width);

}  // namespace smpcl
