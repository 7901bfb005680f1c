#include "smpcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "smpcl/error.hpp"

namespace smpcl {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

// out = x viewed with a different shape; gradient is the identity on data.
template <typename T>
Tensor<T> relabel(const Tensor<T>& x, Shape shape, const char* op) {
  const bool tracked = detail::tracking<T>({&x});
  std::vector<T> data(x.data().begin(), x.data().end());
  auto out = detail::make_result<T>(std::move(shape), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>(op, {xn}, out, [xn, on] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return relabel(x, std::move(shape), "reshape");
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) throw ShapeError("permute: axis order length does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: axis order is not a permutation");
    seen[a] = true;
  }

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }

  // src_index[o] for every output flat index o.
  const std::size_t n = x.numel();
  std::vector<std::size_t> src_index(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    src_index[o] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += src_strides[d];
      if (counter[d] < out_shape[d]) break;
      src -= src_strides[d] * counter[d];
      counter[d] = 0;
    }
  }

  std::vector<T> data(n);
  const auto xd = x.data();
  for (std::size_t o = 0; o < n; ++o) data[o] = xd[src_index[o]];

  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>(out_shape, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("permute", {xn}, out, [xn, on, src_index = std::move(src_index)] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t o = 0; o < src_index.size(); ++o) gx[src_index[o]] += g[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "transpose");
  return permute(x, {1, 0});
}

template <typename T>
Tensor<T> flatten_to_sequence(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "flatten_to_sequence");
  const auto c = x.dim(0);
  const auto l = x.dim(1) * x.dim(2);
  return transpose(reshape(x, {c, l}));
}

template <typename T>
Tensor<T> sequence_to_grid(const Tensor<T>& seq, std::size_t height, std::size_t width) {
  require_rank(seq.shape(), 2, "sequence_to_grid");
  if (seq.dim(0) != height * width) {
    throw ShapeError("sequence_to_grid: sequence length " + std::to_string(seq.dim(0)) +
                     " != " + std::to_string(height) + "x" + std::to_string(width));
  }
  const auto c = seq.dim(1);
  return reshape(transpose(seq), {c, height, width});
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw ShapeError("concat: trailing extents differ: " + shape_str(p.shape()) + " vs " +
                       shape_str(shape));
    }
    lead += p.dim(0);
  }
  shape[0] = lead;
  std::vector<T> data;
  data.reserve(shape_numel(shape));
  bool tracked = false;
  for (const auto& p : parts) {
    data.insert(data.end(), p.data().begin(), p.data().end());
    tracked = tracked || detail::tracking<T>({&p});
  }
  auto out = detail::make_result<T>(shape, std::move(data), tracked);
  if (tracked) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto* on = out.node().get();
    detail::record<T>("concat", nodes, out, [nodes, on] {
      const T* g = on->grad.data();
      std::size_t offset = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) {
          T* gp = n->grad_buffer();
          for (std::size_t i = 0; i < n->data.size(); ++i) gp[i] += g[offset + i];
        }
        offset += n->data.size();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::uint32_t> idx) {
  require_rank(x.shape(), 2, "gather_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (idx.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<T> data(idx.size() * cols);
  const auto xd = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range " +
                       std::to_string(rows));
    }
    std::copy_n(xd.begin() + idx[r] * cols, cols, data.begin() + r * cols);
  }
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>({idx.size(), cols}, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    std::vector<std::uint32_t> rows_copy(idx.begin(), idx.end());
    detail::record<T>("gather_rows", {xn}, out, [xn, on, cols, rows_copy = std::move(rows_copy)] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t r = 0; r < rows_copy.size(); ++r) {
        T* dst = gx + rows_copy[r] * cols;
        const T* s = g + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += s[c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scatter_rows(const std::vector<Tensor<T>>& parts,
                       const std::vector<std::span<const std::uint32_t>>& idx, std::size_t rows,
                       Accumulate mode) {
  if (parts.empty() || parts.size() != idx.size()) {
    throw ShapeError("scatter_rows: need one index list per part");
  }
  const std::size_t cols = parts.front().dim(1);
  std::vector<T> data(rows * cols, T(0));
  // writer[r] = (part, row-in-part) that owns output row r under overwrite.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> writer(rows, {UINT32_MAX, 0});
  bool tracked = false;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const auto& p = parts[j];
    require_rank(p.shape(), 2, "scatter_rows");
    if (p.dim(1) != cols || p.dim(0) != idx[j].size()) {
      throw ShapeError("scatter_rows: part " + std::to_string(j) + " shape " +
                       shape_str(p.shape()) + " does not match its index list");
    }
    const auto pd = p.data();
    for (std::size_t r = 0; r < idx[j].size(); ++r) {
      const auto dst = idx[j][r];
      if (dst >= rows) {
        throw ShapeError("scatter_rows: index " + std::to_string(dst) + " out of range " +
                         std::to_string(rows));
      }
      T* d = data.data() + dst * cols;
      const T* s = pd.data() + r * cols;
      if (mode == Accumulate::kAdd) {
        for (std::size_t c = 0; c < cols; ++c) d[c] += s[c];
      } else {
        std::copy_n(s, cols, d);
        writer[dst] = {static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(r)};
      }
    }
    tracked = tracked || detail::tracking<T>({&p});
  }
  auto out = detail::make_result<T>({rows, cols}, std::move(data), tracked);
  if (tracked) {
    std::vector<NodePtr<T>> nodes;
    std::vector<std::vector<std::uint32_t>> lists;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      nodes.push_back(parts[j].node());
      lists.emplace_back(idx[j].begin(), idx[j].end());
    }
    auto* on = out.node().get();
    detail::record<T>("scatter_rows", nodes, out,
                      [nodes, on, cols, mode, lists = std::move(lists), writer = std::move(writer)] {
                        const T* g = on->grad.data();
                        for (std::size_t j = 0; j < nodes.size(); ++j) {
                          if (!nodes[j]->requires_grad) continue;
                          T* gp = nodes[j]->grad_buffer();
                          for (std::size_t r = 0; r < lists[j].size(); ++r) {
                            const auto src = lists[j][r];
                            if (mode == Accumulate::kOverwrite &&
                                (writer[src].first != j || writer[src].second != r)) {
                              continue;
                            }
                            for (std::size_t c = 0; c < cols; ++c) {
                              gp[r * cols + c] += g[src * cols + c];
                            }
                          }
                        }
                      });
  }
  return out;
}

// ---- elementwise ------------------------------------------------------------

namespace {

template <typename T, typename Fwd, typename BwdA, typename BwdB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, BwdA bwd_a,
                 BwdB bwd_b) {
  require_same_shape(a.shape(), b.shape(), op);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> data(ad.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = fwd(ad[i], bd[i]);
  const bool tracked = detail::tracking<T>({&a, &b});
  auto out = detail::make_result<T>(a.shape(), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> an = a.node(), bn = b.node();
    auto* on = out.node().get();
    detail::record<T>(op, {an, bn}, out, [an, bn, on, bwd_a, bwd_b] {
      const T* g = on->grad.data();
      const std::size_t n = on->grad.size();
      if (an->requires_grad) {
        T* ga = an->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) ga[i] += bwd_a(g[i], an->data[i], bn->data[i]);
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gb[i] += bwd_b(g[i], an->data[i], bn->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto xd = x.data();
  std::vector<T> data(xd.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = xd[i] * factor;
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>(x.shape(), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("scale", {xn}, out, [xn, on, factor] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  const auto xd = x.data();
  std::vector<T> data(xd.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = xd[i] + offset;
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>(x.shape(), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("add_scalar", {xn}, out, [xn, on] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& s, const Tensor<T>& x) {
  if (s.numel() != 1) throw ShapeError("mul_scalar: scale must have one element");
  const T k = s.data()[0];
  const auto xd = x.data();
  std::vector<T> data(xd.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = k * xd[i];
  const bool tracked = detail::tracking<T>({&s, &x});
  auto out = detail::make_result<T>(x.shape(), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> sn = s.node(), xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("mul_scalar", {sn, xn}, out, [sn, xn, on] {
      const T* g = on->grad.data();
      const std::size_t n = on->grad.size();
      if (sn->requires_grad) {
        T acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += g[i] * xn->data[i];
        sn->grad_buffer()[0] += acc;
      }
      if (xn->requires_grad) {
        T* gx = xn->grad_buffer();
        const T k = sn->data[0];
        for (std::size_t i = 0; i < n; ++i) gx[i] += k * g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>({1}, {acc}, tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("sum", {xn}, out, [xn, on] {
      T* gx = xn->grad_buffer();
      const T g = on->grad[0];
      for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& b, std::size_t rows) {
  require_rank(b.shape(), 1, "broadcast_rows");
  const std::size_t cols = b.dim(0);
  std::vector<T> data(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(b.data().begin(), b.data().end(), data.begin() + r * cols);
  }
  const bool tracked = detail::tracking<T>({&b});
  auto out = detail::make_result<T>({rows, cols}, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> bn = b.node();
    auto* on = out.node().get();
    detail::record<T>("broadcast_rows", {bn}, out, [bn, on, rows, cols] {
      T* gb = bn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> data(m * n, T(0));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ad[i * k + p];
      const T* brow = bd + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  const bool tracked = detail::tracking<T>({&a, &b});
  auto out = detail::make_result<T>({m, n}, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> an = a.node(), bn = b.node();
    auto* on = out.node().get();
    detail::record<T>("matmul", {an, bn}, out, [an, bn, on, m, k, n] {
      const T* g = on->grad.data();
      if (an->requires_grad) {
        T* ga = an->grad_buffer();
        const T* bd = bn->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer();
        const T* ad = an->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const T av = ad[i * k + p];
            T* dst = gb + p * n;
            const T* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

// ---- activations ------------------------------------------------------------

namespace {

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  if (x > T(30)) return x;
  return std::log1p(std::exp(x));
}

const char* activation_name(Activation kind) {
  switch (kind) {
    case Activation::kSilu: return "silu";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftplus: return "softplus";
    case Activation::kExp: return "exp";
    case Activation::kLog: return "log";
  }
  return "?";
}

}  // namespace

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  const auto xd = x.data();
  std::vector<T> data(xd.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const T v = xd[i];
    switch (kind) {
      case Activation::kSilu: data[i] = v * stable_sigmoid(v); break;
      case Activation::kRelu: data[i] = v > 0 ? v : T(0); break;
      case Activation::kSigmoid: data[i] = stable_sigmoid(v); break;
      case Activation::kSoftplus: data[i] = stable_softplus(v); break;
      case Activation::kExp: data[i] = std::exp(v); break;
      case Activation::kLog:
        if (!(v > 0)) throw DomainError("log of non-positive value " + std::to_string(v));
        data[i] = std::log(v);
        break;
    }
  }
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>(x.shape(), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>(activation_name(kind), {xn}, out, [xn, on, kind] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      const T* xv = xn->data.data();
      const T* yv = on->data.data();
      const std::size_t n = on->grad.size();
      for (std::size_t i = 0; i < n; ++i) {
        T d = T(0);
        switch (kind) {
          case Activation::kSilu: {
            const T s = stable_sigmoid(xv[i]);
            d = s * (T(1) + xv[i] * (T(1) - s));
            break;
          }
          case Activation::kRelu: d = xv[i] > 0 ? T(1) : T(0); break;
          case Activation::kSigmoid: d = yv[i] * (T(1) - yv[i]); break;
          case Activation::kSoftplus: d = stable_sigmoid(xv[i]); break;
          case Activation::kExp: d = yv[i]; break;
          case Activation::kLog: d = T(1) / xv[i]; break;
        }
        gx[i] += g[i] * d;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  const auto xd = x.data();
  std::vector<T> data(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xd[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xd[base + k * inner]);
      T total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(xd[base + k * inner] - mx);
        data[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) data[base + k * inner] /= total;
    }
  }
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>(shape, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("softmax", {xn}, out, [xn, on, outer, inner, len] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      const T* y = on->data.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = 0;
          for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t i = base + k * inner;
            gx[i] += y[i] * (g[i] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps) {
  require_rank(x.shape(), 2, "layer_norm_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols}) {
    throw ShapeError("layer_norm_rows: gamma/beta must be (" + std::to_string(cols) + ")");
  }
  const T* xd = x.data().data();
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();
  std::vector<T> data(rows * cols), xhat(rows * cols), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd + r * cols;
    T mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(cols);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      xhat[i] = (row[c] - mu) * inv_std[r];
      data[i] = gd[c] * xhat[i] + bd[c];
    }
  }
  const bool tracked = detail::tracking<T>({&x, &gamma, &beta});
  auto out = detail::make_result<T>({rows, cols}, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto* on = out.node().get();
    detail::record<T>("layer_norm_rows", {xn, gn, bn}, out,
                      [xn, gn, bn, on, rows, cols, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)] {
      const T* g = on->grad.data();
      if (gn->requires_grad || bn->requires_grad) {
        T* gg = gn->requires_grad ? gn->grad_buffer() : nullptr;
        T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
        for (std::size_t i = 0; i < rows * cols; ++i) {
          if (gg) gg[i % cols] += g[i] * xhat[i];
          if (gb) gb[i % cols] += g[i];
        }
      }
      if (!xn->requires_grad) return;
      T* gx = xn->grad_buffer();
      const T* gam = gn->data.data();
      const T n = static_cast<T>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_d = 0, mean_dx = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          const T d = g[i] * gam[c];
          mean_d += d;
          mean_dx += d * xhat[i];
        }
        mean_d /= n;
        mean_dx /= n;
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          gx[i] += inv_std[r] * (g[i] * gam[c] - mean_d - xhat[i] * mean_dx);
        }
      }
    });
  }
  return out;
}

#define SMPCL_INSTANTIATE(T)                                                                  \
  template Tensor<T> layer_norm_rows<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                     \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);           \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                          \
  template Tensor<T> flatten_to_sequence<T>(const Tensor<T>&);                                \
  template Tensor<T> sequence_to_grid<T>(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::uint32_t>);        \
  template Tensor<T> scatter_rows<T>(const std::vector<Tensor<T>>&,                           \
                                     const std::vector<std::span<const std::uint32_t>>&,      \
                                     std::size_t, Accumulate);                                \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                      \
  template Tensor<T> mul_scalar<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean<T>(const Tensor<T>&);                                               \
  template Tensor<T> broadcast_rows<T>(const Tensor<T>&, std::size_t);                        \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);                             \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);

SMPCL_INSTANTIATE(float)
SMPCL_INSTANTIATE(double)

#undef SMPCL_INSTANTIATE

}  // namespace smpcl
