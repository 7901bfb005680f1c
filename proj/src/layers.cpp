#include "smpcl/layers.hpp"

#include <cmath>

#include "smpcl/error.hpp"

namespace smpcl {

namespace {

// Uniform with variance 1/fan_in.
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
void ParameterSet<T>::add(std::string name, const Tensor<T>& t) {
  for (const auto& [n, _] : entries_) {
    if (n == name) throw ValidationError("duplicate parameter name " + name);
  }
  entries_.emplace_back(std::move(name), t);
}

template <typename T>
void ParameterSet<T>::append(const std::string& prefix, const ParameterSet& other) {
  for (const auto& [n, t] : other.entries()) add(prefix + "." + n, t);
}

template <typename T>
std::vector<Tensor<T>> ParameterSet<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

template <typename T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return &e.second;
  }
  return nullptr;
}

template <typename T>
std::size_t ParameterSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() const {
  for (auto e : entries_) e.second.zero_grad();
}

// ---- Conv2dLayer ---------------------------------------------------------------

template <typename T>
Conv2dLayer<T> Conv2dLayer<T>::make(std::size_t in, std::size_t out, std::size_t kernel,
                                    std::size_t stride, std::size_t padding, Rng& rng,
                                    bool transposed) {
  Conv2dLayer layer;
  layer.stride = stride;
  layer.padding = padding;
  layer.transposed = transposed;
  if (transposed) {
    const std::size_t fan_in = std::max<std::size_t>(1, in * kernel * kernel / (stride * stride));
    layer.weight = fan_in_uniform<T>({in, out, kernel, kernel}, fan_in, rng);
  } else {
    layer.weight = fan_in_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, rng);
  }
  layer.bias = Tensor<T>::zeros({out}, true);
  return layer;
}

template <typename T>
Tensor<T> Conv2dLayer<T>::operator()(const Tensor<T>& x) const {
  return add_channel_bias(conv2d(x, weight, stride, padding, transposed), bias);
}

template <typename T>
ParameterSet<T> Conv2dLayer<T>::parameters() const {
  ParameterSet<T> p;
  p.add("weight", weight);
  p.add("bias", bias);
  return p;
}

// ---- LinearLayer ---------------------------------------------------------------

template <typename T>
LinearLayer<T> LinearLayer<T>::make(std::size_t in, std::size_t out, Rng& rng) {
  LinearLayer layer;
  layer.weight = fan_in_uniform<T>({in, out}, in, rng);
  layer.bias = Tensor<T>::zeros({out}, true);
  return layer;
}

template <typename T>
Tensor<T> LinearLayer<T>::operator()(const Tensor<T>& x) const {
  return add(matmul(x, weight), broadcast_rows(bias, x.dim(0)));
}

template <typename T>
ParameterSet<T> LinearLayer<T>::parameters() const {
  ParameterSet<T> p;
  p.add("weight", weight);
  p.add("bias", bias);
  return p;
}

// ---- ResidualBlock -------------------------------------------------------------

template <typename T>
ResidualBlock<T> ResidualBlock<T>::make(std::size_t in, std::size_t out, Rng& rng) {
  ResidualBlock block;
  block.conv1 = Conv2dLayer<T>::make(in, out, 3, 1, 1, rng);
  block.conv2 = Conv2dLayer<T>::make(out, out, 3, 1, 1, rng);
  block.has_skip = in != out;
  if (block.has_skip) block.skip = Conv2dLayer<T>::make(in, out, 1, 1, 0, rng);
  return block;
}

template <typename T>
Tensor<T> ResidualBlock<T>::operator()(const Tensor<T>& x) const {
  auto h = conv2(silu(conv1(x)));
  return silu(add(h, has_skip ? skip(x) : x));
}

template <typename T>
ParameterSet<T> ResidualBlock<T>::parameters() const {
  ParameterSet<T> p;
  p.append("conv1", conv1.parameters());
  p.append("conv2", conv2.parameters());
  if (has_skip) p.append("skip", skip.parameters());
  return p;
}

// ---- SparseMambaBlock ----------------------------------------------------------

template <typename T>
SparseMambaBlock<T> SparseMambaBlock<T>::make(std::size_t channels, std::size_t state_size,
                                              std::size_t conv_kernel, ScanMode mode,
                                              int skip_step, Rng& rng) {
  if (conv_kernel == 0) throw ValidationError("conv1d kernel must be >= 1");
  SparseMambaBlock block;
  const std::size_t inner = 2 * channels;
  block.res1 = ResidualBlock<T>::make(channels, channels, rng);
  block.res2 = ResidualBlock<T>::make(channels, channels, rng);
  block.norm_gamma = Tensor<T>::full({channels}, T(1), true);
  block.norm_beta = Tensor<T>::zeros({channels}, true);
  block.lin_a = LinearLayer<T>::make(channels, inner, rng);
  block.lin_b = LinearLayer<T>::make(channels, inner, rng);
  block.conv1d_weight = fan_in_uniform<T>({inner, conv_kernel}, conv_kernel, rng);
  block.conv1d_bias = Tensor<T>::zeros({inner}, true);
  block.s6 = S6Params<T>::init(inner, state_size, rng);
  block.lin_out = LinearLayer<T>::make(inner, channels, rng);
  block.mode = mode;
  block.skip_step = skip_step;
  return block;
}

template <typename T>
Tensor<T> SparseMambaBlock<T>::scan(const Tensor<T>& seq, std::size_t height,
                                    std::size_t width) const {
  const int h = static_cast<int>(height), w = static_cast<int>(width);
  std::vector<ScanOrder> orders;
  if (mode == ScanMode::kDense) {
    auto dense = ss2d_orders(h, w);
    orders.assign(dense.begin(), dense.end());
  } else {
    for (auto& o : sparse_orders(h, w, skip_step)) {
      if (!o.indices.empty()) orders.push_back(std::move(o));
    }
  }
  std::vector<Tensor<T>> outs;
  std::vector<std::span<const std::uint32_t>> idx;
  for (const auto& o : orders) {
    outs.push_back(s6_forward(gather_rows(seq, o.indices), s6));
    idx.emplace_back(o.indices);
  }
  if (mode == ScanMode::kDense) {
    return scale(scatter_rows(outs, idx, seq.dim(0), Accumulate::kAdd), T(0.25));
  }
  return scatter_rows(outs, idx, seq.dim(0), Accumulate::kOverwrite);
}

template <typename T>
Tensor<T> SparseMambaBlock<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(0) != lin_a.weight.dim(0)) {
    throw ShapeError("smb: expected (" + std::to_string(lin_a.weight.dim(0)) + ",H,W), got " +
                     shape_str(x.shape()));
  }
  const std::size_t height = x.dim(1), width = x.dim(2);
  auto seq = layer_norm_rows(flatten_to_sequence(res2(res1(x))), norm_gamma, norm_beta);
  const std::size_t len = seq.dim(0);
  auto gate = silu(lin_a(seq));
  auto local = add(conv1d_depthwise(lin_b(seq), conv1d_weight), broadcast_rows(conv1d_bias, len));
  auto scanned = scan(silu(local), height, width);
  if (gate.shape() != scanned.shape()) {
    throw ShapeError("smb: branch shapes differ " + shape_str(gate.shape()) + " vs " +
                     shape_str(scanned.shape()));
  }
  return sequence_to_grid(lin_out(mul(gate, scanned)), height, width);
}

template <typename T>
ParameterSet<T> SparseMambaBlock<T>::parameters() const {
  ParameterSet<T> p;
  p.append("res1", res1.parameters());
  p.append("res2", res2.parameters());
  p.add("norm.gamma", norm_gamma);
  p.add("norm.beta", norm_beta);
  p.append("lin_a", lin_a.parameters());
  p.append("lin_b", lin_b.parameters());
  p.add("conv1d.weight", conv1d_weight);
  p.add("conv1d.bias", conv1d_bias);
  const auto names = s6.names();
  const auto tensors = s6.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) p.add("s6." + names[i], tensors[i]);
  p.append("lin_out", lin_out.parameters());
  return p;
}

// ---- DualAttention -------------------------------------------------------------

template <typename T>
DualAttention<T> DualAttention<T>::make(std::size_t channels, Rng& rng) {
  DualAttention att;
  const std::size_t reduced = std::max<std::size_t>(1, channels / 8);
  att.query = Conv2dLayer<T>::make(channels, reduced, 1, 1, 0, rng);
  att.key = Conv2dLayer<T>::make(channels, reduced, 1, 1, 0, rng);
  att.value = Conv2dLayer<T>::make(channels, channels, 1, 1, 0, rng);
  att.gamma_position = Tensor<T>::zeros({1}, true);
  att.gamma_channel = Tensor<T>::zeros({1}, true);
  return att;
}

template <typename T>
typename DualAttention<T>::Maps DualAttention<T>::attention_maps(const Tensor<T>& x) const {
  if (x.rank() != 3) throw ShapeError("dual attention: expected (C,H,W)");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  auto q = reshape(query(x), {query.bias.dim(0), n});
  auto k = reshape(key(x), {key.bias.dim(0), n});
  auto flat = reshape(x, {c, n});
  return {softmax(matmul(transpose(q), k), 1), softmax(matmul(flat, transpose(flat)), 1)};
}

template <typename T>
Tensor<T> DualAttention<T>::operator()(const Tensor<T>& x) const {
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  auto maps = attention_maps(x);
  auto v = reshape(value(x), {c, n});
  auto position = reshape(matmul(v, transpose(maps.position)), x.shape());
  auto channel = reshape(matmul(maps.channel, reshape(x, {c, n})), x.shape());
  return add(x, add(mul_scalar(gamma_position, position), mul_scalar(gamma_channel, channel)));
}

template <typename T>
ParameterSet<T> DualAttention<T>::parameters() const {
  ParameterSet<T> p;
  p.append("query", query.parameters());
  p.append("key", key.parameters());
  p.append("value", value.parameters());
  p.add("gamma_position", gamma_position);
  p.add("gamma_channel", gamma_channel);
  return p;
}

#define SMPCL_INSTANTIATE(T)           \
  template class ParameterSet<T>;      \
  template struct Conv2dLayer<T>;      \
  template struct LinearLayer<T>;      \
  template struct ResidualBlock<T>;    \
  template struct SparseMambaBlock<T>; \
  template struct DualAttention<T>;

SMPCL_INSTANTIATE(float)
SMPCL_INSTANTIATE(double)

}  // namespace smpcl
