#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smpcl/ops.hpp"
#include "smpcl/random.hpp"
#include "smpcl/s6.hpp"
#include "smpcl/scan_orders.hpp"

namespace smpcl {

/// Ordered, named parameter handles. Copies of a Tensor share storage, so
/// optimizers and checkpoint loaders write through to the owning layers.
template <typename T>
class ParameterSet {
 public:
  void add(std::string name, const Tensor<T>& t);
  void append(const std::string& prefix, const ParameterSet& other);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const& { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>> entries() && { return std::move(entries_); }
  std::vector<Tensor<T>> tensors() const;
  const Tensor<T>* find(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  void zero_grad() const;

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // (Cout,Cin,k,k), or (Cin,Cout,k,k) when transposed
  Tensor<T> bias;    // (Cout)
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;

  static Conv2dLayer make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          std::size_t padding, Rng& rng, bool transposed = false);
  Tensor<T> operator()(const Tensor<T>& x) const;
  ParameterSet<T> parameters() const;
};

/// Row-wise affine map on (L,in) sequences.
template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // (in,out)
  Tensor<T> bias;    // (out)

  static LinearLayer make(std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  ParameterSet<T> parameters() const;
};

/// silu(conv3x3(silu(conv3x3(x))) + skip(x)); skip is a 1x1 conv when the
/// channel count changes, identity otherwise.
template <typename T>
struct ResidualBlock {
  Conv2dLayer<T> conv1;
  Conv2dLayer<T> conv2;
  bool has_skip = false;
  Conv2dLayer<T> skip;

  static ResidualBlock make(std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  ParameterSet<T> parameters() const;
};

enum class ScanMode { kSparse, kDense };

/// Sparse Mamba Block over (C,H,W) features.
///
///   x' = res2(res1(x)), s = norm(flatten(x'))      (L,C)
///   a = silu(lin_a(s))                              (L,2C)
///   b = ss2d(silu(conv1d(lin_b(s))))                (L,2C)
///   out = reshape(lin_out(a * b))                   (C,H,W)
///
/// Sparse mode runs one S6 pass per skip-sampled group and writes each
/// result back to its own positions. Dense mode runs the four full scans and
/// averages their scatter-add.
template <typename T>
struct SparseMambaBlock {
  ResidualBlock<T> res1;
  ResidualBlock<T> res2;
  // Row-wise layer norm over channels. Without it the Hadamard merge makes
  // the block quadratic in its input and activations collapse across stages.
  Tensor<T> norm_gamma;  // (C)
  Tensor<T> norm_beta;   // (C)
  LinearLayer<T> lin_a;
  LinearLayer<T> lin_b;
  Tensor<T> conv1d_weight;  // (2C,k)
  Tensor<T> conv1d_bias;    // (2C)
  S6Params<T> s6;
  LinearLayer<T> lin_out;
  ScanMode mode = ScanMode::kSparse;
  int skip_step = 2;

  static SparseMambaBlock make(std::size_t channels, std::size_t state_size, std::size_t conv_kernel,
                               ScanMode mode, int skip_step, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  /// The SS2D stage alone on an (L,D) sequence laid out row-major over HxW.
  Tensor<T> scan(const Tensor<T>& seq, std::size_t height, std::size_t width) const;
  ParameterSet<T> parameters() const;
};

/// Position and channel attention added back through scalar gates (init 0).
template <typename T>
struct DualAttention {
  Conv2dLayer<T> query;  // C -> max(1, C/8)
  Conv2dLayer<T> key;
  Conv2dLayer<T> value;  // C -> C
  Tensor<T> gamma_position;  // (1)
  Tensor<T> gamma_channel;   // (1)

  struct Maps {
    Tensor<T> position;  // (HW,HW), rows sum to 1
    Tensor<T> channel;   // (C,C), rows sum to 1
  };

  static DualAttention make(std::size_t channels, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  Maps attention_maps(const Tensor<T>& x) const;
  ParameterSet<T> parameters() const;
};

}  // namespace smpcl
