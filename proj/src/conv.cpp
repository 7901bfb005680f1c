#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "smpcl/error.hpp"
#include "smpcl/ops.hpp"

namespace smpcl {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

// Geometry of one cross-correlation: an "input" grid (ci,h,w) mapped to an
// "output" grid (co,oh,ow) by a (co,ci,kh,kw) kernel.
struct ConvGeom {
  std::size_t ci, h, w, co, oh, ow, kh, kw, stride, pad;
  std::size_t in_size() const { return ci * h * w; }
  std::size_t out_size() const { return co * oh * ow; }
};

// First/last+1 output column touching input column range [0,w) for tap kx.
inline void col_range(const ConvGeom& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  // ix = ox*stride + kx - pad must lie in [0, w)
  const long s = static_cast<long>(g.stride);
  const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
  long first = off >= 0 ? 0 : (-off + s - 1) / s;
  long last = (static_cast<long>(g.w) - 1 - off);
  last = last < 0 ? -1 : last / s;
  first = std::max<long>(first, 0);
  last = std::min<long>(last, static_cast<long>(g.ow) - 1);
  lo = static_cast<std::size_t>(first);
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

// Unfolds the input grid to (ci*kh*kw, oh*ow); out-of-range taps read 0.
template <typename T>
RowMatrix<T> im2col(const ConvGeom& g, const T* in) {
  RowMatrix<T> col = RowMatrix<T>::Zero(g.ci * g.kh * g.kw, g.oh * g.ow);
  for (std::size_t ci = 0; ci < g.ci; ++ci) {
    const T* in_c = in + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col.data() + ((ci * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
        std::size_t lo, hi;
        col_range(g, kx, lo, hi);
        const long base = static_cast<long>(kx) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const T* in_row = in_c + static_cast<std::size_t>(iy) * g.w;
          T* dst = row + oy * g.ow;
          for (std::size_t ox = lo; ox < hi; ++ox) {
            dst[ox] = in_row[static_cast<long>(ox * g.stride) + base];
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: folds columns back, summing overlapping taps.
template <typename T>
void col2im_add(const ConvGeom& g, const RowMatrix<T>& col, T* in) {
  for (std::size_t ci = 0; ci < g.ci; ++ci) {
    T* in_c = in + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col.data() + ((ci * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
        std::size_t lo, hi;
        col_range(g, kx, lo, hi);
        const long base = static_cast<long>(kx) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* in_row = in_c + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = lo; ox < hi; ++ox) {
            in_row[static_cast<long>(ox * g.stride) + base] += src[ox];
          }
        }
      }
    }
  }
}

// out[co] += sum_ci w[co,ci] * in[ci] (correlation).
template <typename T>
void correlate(const ConvGeom& g, const T* in, const T* wt, T* out) {
  const auto col = im2col(g, in);
  ConstMapMatrix<T> w(wt, g.co, g.ci * g.kh * g.kw);
  MapMatrix<T> o(out, g.co, g.oh * g.ow);
  o.noalias() += w * col;
}

// in_grad[ci] += sum_co w[co,ci] (*) out_grad[co]  (adjoint of correlate w.r.t. input).
template <typename T>
void correlate_adjoint(const ConvGeom& g, const T* gout, const T* wt, T* gin) {
  ConstMapMatrix<T> w(wt, g.co, g.ci * g.kh * g.kw);
  ConstMapMatrix<T> go(gout, g.co, g.oh * g.ow);
  RowMatrix<T> col = w.transpose() * go;
  col2im_add(g, col, gin);
}

// w_grad[co,ci,ky,kx] += sum_{oy,ox} out_grad[co,oy,ox] * in[ci,iy,ix].
template <typename T>
void correlate_weight_grad(const ConvGeom& g, const T* gout, const T* in, T* gw) {
  const auto col = im2col(g, in);
  ConstMapMatrix<T> go(gout, g.co, g.oh * g.ow);
  MapMatrix<T> w(gw, g.co, g.ci * g.kh * g.kw);
  w.noalias() += go * col.transpose();
}

struct Batched {
  std::size_t n, c, h, w;
  bool has_batch;
};

Batched split_batch(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected (C,H,W) or (N,C,H,W), got " + shape_str(s));
}

Shape join_batch(const Batched& b, std::size_t c, std::size_t h, std::size_t w) {
  if (b.has_batch) return {b.n, c, h, w};
  return {c, h, w};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding) {
  const auto b = split_batch(x.shape(), "conv2d");
  if (w.rank() != 4) throw ShapeError("conv2d: kernel must be (Cout,Cin,kh,kw)");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (w.dim(1) != b.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(1)) +
                     " input channels, got " + std::to_string(b.c));
  }
  const std::size_t kh = w.dim(2), kw = w.dim(3);
  if (b.h + 2 * padding < kh || b.w + 2 * padding < kw) {
    throw ShapeError("conv2d: output size would be non-positive");
  }
  ConvGeom g{b.c, b.h, b.w, w.dim(0), (b.h + 2 * padding - kh) / stride + 1,
             (b.w + 2 * padding - kw) / stride + 1, kh, kw, stride, padding};

  std::vector<T> data(b.n * g.out_size(), T(0));
  for (std::size_t i = 0; i < b.n; ++i) {
    correlate(g, x.data().data() + i * g.in_size(), w.data().data(), data.data() + i * g.out_size());
  }
  const bool tracked = detail::tracking<T>({&x, &w});
  auto out = detail::make_result<T>(join_batch(b, g.co, g.oh, g.ow), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node(), wn = w.node();
    auto* on = out.node().get();
    const std::size_t n = b.n;
    detail::record<T>("conv2d", {xn, wn}, out, [xn, wn, on, g, n] {
      const T* gout = on->grad.data();
      if (xn->requires_grad) {
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          correlate_adjoint(g, gout + i * g.out_size(), wn->data.data(), gx + i * g.in_size());
        }
      }
      if (wn->requires_grad) {
        T* gw = wn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          correlate_weight_grad(g, gout + i * g.out_size(), xn->data.data() + i * g.in_size(), gw);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                           std::size_t padding) {
  const auto b = split_batch(x.shape(), "conv_transpose2d");
  if (w.rank() != 4) throw ShapeError("conv_transpose2d: kernel must be (Cin,Cout,kh,kw)");
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  if (w.dim(0) != b.c) {
    throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(w.dim(0)) +
                     " input channels, got " + std::to_string(b.c));
  }
  const std::size_t kh = w.dim(2), kw = w.dim(3);
  const long oh = static_cast<long>((b.h - 1) * stride + kh) - 2 * static_cast<long>(padding);
  const long ow = static_cast<long>((b.w - 1) * stride + kw) - 2 * static_cast<long>(padding);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d: output size would be non-positive");

  // The equivalent forward correlation maps the (Cout,oh,ow) grid onto x.
  ConvGeom g{w.dim(1), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow),
             b.c, b.h, b.w, kh, kw, stride, padding};
  std::vector<T> data(b.n * g.in_size(), T(0));
  for (std::size_t i = 0; i < b.n; ++i) {
    correlate_adjoint(g, x.data().data() + i * g.out_size(), w.data().data(),
                      data.data() + i * g.in_size());
  }
  const bool tracked = detail::tracking<T>({&x, &w});
  auto out = detail::make_result<T>(join_batch(b, g.ci, g.h, g.w), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node(), wn = w.node();
    auto* on = out.node().get();
    const std::size_t n = b.n;
    detail::record<T>("conv_transpose2d", {xn, wn}, out, [xn, wn, on, g, n] {
      const T* gout = on->grad.data();
      if (xn->requires_grad) {
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          correlate(g, gout + i * g.in_size(), wn->data.data(), gx + i * g.out_size());
        }
      }
      if (wn->requires_grad) {
        T* gw = wn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          correlate_weight_grad(g, xn->data.data() + i * g.out_size(), gout + i * g.in_size(), gw);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const auto b = split_batch(x.shape(), "add_channel_bias");
  if (bias.rank() != 1 || bias.dim(0) != b.c) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " for " +
                     shape_str(x.shape()));
  }
  const std::size_t plane = b.h * b.w;
  std::vector<T> data(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < b.n; ++i) {
    for (std::size_t c = 0; c < b.c; ++c) {
      T* p = data.data() + (i * b.c + c) * plane;
      const T v = bias.data()[c];
      for (std::size_t k = 0; k < plane; ++k) p[k] += v;
    }
  }
  const bool tracked = detail::tracking<T>({&x, &bias});
  auto out = detail::make_result<T>(x.shape(), std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node(), bn = bias.node();
    auto* on = out.node().get();
    const std::size_t n = b.n, c = b.c;
    detail::record<T>("add_channel_bias", {xn, bn}, out, [xn, bn, on, n, c, plane] {
      const T* g = on->grad.data();
      if (xn->requires_grad) {
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < c; ++k) {
            const T* p = g + (i * c + k) * plane;
            T acc = 0;
            for (std::size_t q = 0; q < plane; ++q) acc += p[q];
            gb[k] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv1d_depthwise(const Tensor<T>& seq, const Tensor<T>& w) {
  if (seq.rank() != 2 || w.rank() != 2 || w.dim(0) != seq.dim(1)) {
    throw ShapeError("conv1d_depthwise: need seq (L,C) and kernel (C,k); got " +
                     shape_str(seq.shape()) + " and " + shape_str(w.shape()));
  }
  const std::size_t len = seq.dim(0), ch = seq.dim(1), k = w.dim(1);
  const T* x = seq.data().data();
  const T* wt = w.data().data();
  std::vector<T> data(len * ch, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const long src = static_cast<long>(t + j) - static_cast<long>(k - 1);
      if (src < 0) continue;
      const T* xr = x + static_cast<std::size_t>(src) * ch;
      T* yr = data.data() + t * ch;
      for (std::size_t c = 0; c < ch; ++c) yr[c] += wt[c * k + j] * xr[c];
    }
  }
  const bool tracked = detail::tracking<T>({&seq, &w});
  auto out = detail::make_result<T>({len, ch}, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = seq.node(), wn = w.node();
    auto* on = out.node().get();
    detail::record<T>("conv1d_depthwise", {xn, wn}, out, [xn, wn, on, len, ch, k] {
      const T* g = on->grad.data();
      T* gx = xn->requires_grad ? xn->grad_buffer() : nullptr;
      T* gw = wn->requires_grad ? wn->grad_buffer() : nullptr;
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t + j) - static_cast<long>(k - 1);
          if (src < 0) continue;
          const std::size_t s = static_cast<std::size_t>(src);
          for (std::size_t c = 0; c < ch; ++c) {
            const T gv = g[t * ch + c];
            if (gx) gx[s * ch + c] += wn->data[c * k + j] * gv;
            if (gw) gw[c * k + j] += xn->data[s * ch + c] * gv;
          }
        }
      }
    });
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;  // weight of i1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t height, std::size_t width) {
  if (x.rank() != 3) throw ShapeError("resize_bilinear: expected (C,H,W)");
  if (height == 0 || width == 0) throw ShapeError("resize_bilinear: empty target size");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = bilinear_taps(h, height);
  const auto tx = bilinear_taps(w, width);
  std::vector<T> data(c * height * width);
  const T* xd = x.data().data();
  for (std::size_t k = 0; k < c; ++k) {
    const T* p = xd + k * h * w;
    for (std::size_t oy = 0; oy < height; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < width; ++ox) {
        const auto& b = tx[ox];
        const T top = p[a.i0 * w + b.i0] * T(1 - b.frac) + p[a.i0 * w + b.i1] * T(b.frac);
        const T bot = p[a.i1 * w + b.i0] * T(1 - b.frac) + p[a.i1 * w + b.i1] * T(b.frac);
        data[(k * height + oy) * width + ox] = top * T(1 - a.frac) + bot * T(a.frac);
      }
    }
  }
  const bool tracked = detail::tracking<T>({&x});
  auto out = detail::make_result<T>({c, height, width}, std::move(data), tracked);
  if (tracked) {
    NodePtr<T> xn = x.node();
    auto* on = out.node().get();
    detail::record<T>("resize_bilinear", {xn}, out, [xn, on, c, h, w, height, width, ty, tx] {
      T* gx = xn->grad_buffer();
      const T* g = on->grad.data();
      for (std::size_t k = 0; k < c; ++k) {
        T* p = gx + k * h * w;
        for (std::size_t oy = 0; oy < height; ++oy) {
          const auto& a = ty[oy];
          for (std::size_t ox = 0; ox < width; ++ox) {
            const auto& b = tx[ox];
            const T gv = g[(k * height + oy) * width + ox];
            const T top = gv * T(1 - a.frac);
            const T bot = gv * T(a.frac);
            p[a.i0 * w + b.i0] += top * T(1 - b.frac);
            p[a.i0 * w + b.i1] += top * T(b.frac);
            p[a.i1 * w + b.i0] += bot * T(1 - b.frac);
            p[a.i1 * w + b.i1] += bot * T(b.frac);
          }
        }
      }
    });
  }
  return out;
}

#define SMPCL_INSTANTIATE(T)                                                                    \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                                         std::size_t);                                          \
  template Tensor<T> add_channel_bias<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> conv1d_depthwise<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::size_t, std::size_t);

SMPCL_INSTANTIATE(float)
SMPCL_INSTANTIATE(double)

#undef SMPCL_INSTANTIATE

}  // namespace smpcl
