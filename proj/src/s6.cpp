#include "smpcl/s6.hpp"

#include <cmath>
#include <memory>

#include "smpcl/error.hpp"
#include "smpcl/gradcheck.hpp"

namespace smpcl {

namespace {

template <typename T>
Tensor<T> random_uniform(Shape shape, double bound, Rng& rng) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* name) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw DomainError(std::string("s6: non-finite value in ") + name);
  }
}

}  // namespace

template <typename T>
S6Params<T> S6Params<T>::init(std::size_t channels, std::size_t state_size, Rng& rng) {
  if (channels == 0 || state_size == 0) throw ShapeError("s6: channels and state size must be >= 1");
  S6Params p;
  std::vector<T> a_log(channels * state_size);
  for (std::size_t d = 0; d < channels; ++d) {
    for (std::size_t n = 0; n < state_size; ++n) {
      a_log[d * state_size + n] = static_cast<T>(std::log(static_cast<double>(n + 1)));
    }
  }
  p.a_log = Tensor<T>({channels, state_size}, std::move(a_log), true);

  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  p.w_delta = random_uniform<T>({channels, channels}, bound, rng);
  p.w_b = random_uniform<T>({channels, state_size}, bound, rng);
  p.w_c = random_uniform<T>({channels, state_size}, bound, rng);

  // softplus^-1(dt) = dt + log(-expm1(-dt))
  std::vector<T> b(channels);
  for (auto& v : b) {
    const double dt = std::exp(rng.uniform(std::log(0.01), std::log(0.1)));
    v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
  }
  p.b_delta = Tensor<T>({channels}, std::move(b), true);
  p.d_skip = Tensor<T>::full({channels}, T(1), true);
  return p;
}

template <typename T>
std::vector<Tensor<T>> S6Params<T>::parameters() const {
  return {a_log, w_delta, b_delta, w_b, w_c, d_skip};
}

template <typename T>
std::vector<std::string> S6Params<T>::names() const {
  return {"a_log", "w_delta", "b_delta", "w_b", "w_c", "d_skip"};
}

template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a,
                         const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& d) {
  if (x.rank() != 2 || delta.shape() != x.shape()) {
    throw ShapeError("selective_scan: x and delta must both be (L,D)");
  }
  const std::size_t len = x.dim(0), ch = x.dim(1);
  if (a.rank() != 2 || a.dim(0) != ch) throw ShapeError("selective_scan: A must be (D,N)");
  const std::size_t ns = a.dim(1);
  if (b.shape() != Shape{len, ns} || c.shape() != Shape{len, ns}) {
    throw ShapeError("selective_scan: B and C must be (L,N)");
  }
  if (d.shape() != Shape{ch}) throw ShapeError("selective_scan: D must be (D)");

  const bool tracked = detail::tracking<T>({&x, &delta, &a, &b, &c, &d});
  const T* xs = x.data().data();
  const T* dt = delta.data().data();
  const T* av = a.data().data();
  const T* bv = b.data().data();
  const T* cv = c.data().data();
  const T* dv = d.data().data();

  // Hidden states for every step, kept for the backward sweep.
  auto states = std::make_shared<std::vector<T>>(tracked ? len * ch * ns : 0);
  std::vector<T> h(ch * ns, T(0));
  std::vector<T> y(len * ch);
  for (std::size_t t = 0; t < len; ++t) {
    const T* bt = bv + t * ns;
    const T* ct = cv + t * ns;
    for (std::size_t i = 0; i < ch; ++i) {
      const T step = dt[t * ch + i];
      const T xv = xs[t * ch + i];
      T* hi = h.data() + i * ns;
      const T* ai = av + i * ns;
      T acc = 0;
      for (std::size_t n = 0; n < ns; ++n) {
        hi[n] = std::exp(step * ai[n]) * hi[n] + step * bt[n] * xv;
        acc += ct[n] * hi[n];
      }
      y[t * ch + i] = acc + dv[i] * xv;
    }
    if (tracked) std::copy(h.begin(), h.end(), states->begin() + t * ch * ns);
  }

  auto out = detail::make_result<T>({len, ch}, std::move(y), tracked);
  if (tracked) {
    auto xn = x.node(), dn = delta.node(), an = a.node(), bn = b.node(), cn = c.node(),
         skn = d.node();
    auto* on = out.node().get();
    detail::record<T>(
        "selective_scan", {xn, dn, an, bn, cn, skn}, out,
        [xn, dn, an, bn, cn, skn, on, states, len, ch, ns] {
          const T* g = on->grad.data();
          const T* xs = xn->data.data();
          const T* dt = dn->data.data();
          const T* av = an->data.data();
          const T* bv = bn->data.data();
          const T* cv = cn->data.data();
          const T* dv = skn->data.data();
          const T* hs = states->data();
          std::vector<T> gx(len * ch, T(0)), gdt(len * ch, T(0)), ga(ch * ns, T(0)),
              gb(len * ns, T(0)), gc(len * ns, T(0)), gd(ch, T(0));
          // Adjoint of h_t, carried backwards in time.
          std::vector<T> gh(ch * ns, T(0));
          for (std::size_t t = len; t-- > 0;) {
            const T* bt = bv + t * ns;
            const T* ct = cv + t * ns;
            T* gbt = gb.data() + t * ns;
            T* gct = gc.data() + t * ns;
            for (std::size_t i = 0; i < ch; ++i) {
              const std::size_t ti = t * ch + i;
              const T gy = g[ti];
              const T xv = xs[ti];
              const T step = dt[ti];
              gd[i] += gy * xv;
              T gxv = gy * dv[i];
              T gstep = 0;
              const T* ht = hs + (t * ch + i) * ns;
              const T* hp = t > 0 ? hs + ((t - 1) * ch + i) * ns : nullptr;
              const T* ai = av + i * ns;
              T* ghi = gh.data() + i * ns;
              T* gai = ga.data() + i * ns;
              for (std::size_t n = 0; n < ns; ++n) {
                gct[n] += gy * ht[n];
                const T gn = ghi[n] + gy * ct[n];
                const T decay = std::exp(step * ai[n]);
                const T prev = hp ? hp[n] : T(0);
                gstep += gn * (ai[n] * decay * prev + bt[n] * xv);
                gai[n] += gn * step * decay * prev;
                gbt[n] += gn * step * xv;
                gxv += gn * step * bt[n];
                ghi[n] = gn * decay;
              }
              gx[ti] += gxv;
              gdt[ti] += gstep;
            }
          }
          auto accumulate = [](const std::shared_ptr<TensorNode<T>>& node, const std::vector<T>& v) {
            if (!node->requires_grad) return;
            T* dst = node->grad_buffer();
            for (std::size_t k = 0; k < v.size(); ++k) dst[k] += v[k];
          };
          accumulate(xn, gx);
          accumulate(dn, gdt);
          accumulate(an, ga);
          accumulate(bn, gb);
          accumulate(cn, gc);
          accumulate(skn, gd);
        });
  }
  return out;
}

template <typename T>
Tensor<T> s6_forward(const Tensor<T>& seq, const S6Params<T>& params) {
  if (seq.rank() != 2 || seq.dim(0) == 0) throw ShapeError("s6_forward: expected (L,C) with L >= 1");
  if (seq.dim(1) != params.channels()) {
    throw ShapeError("s6_forward: sequence has " + std::to_string(seq.dim(1)) +
                     " channels, parameters expect " + std::to_string(params.channels()));
  }
  const auto names = params.names();
  const auto tensors = params.parameters();
  for (std::size_t i = 0; i < tensors.size(); ++i) require_finite(tensors[i], names[i].c_str());

  const std::size_t len = seq.dim(0);
  auto delta = softplus(add(matmul(seq, params.w_delta), broadcast_rows(params.b_delta, len)));
  auto a = scale(exp(params.a_log), T(-1));
  auto b = matmul(seq, params.w_b);
  auto c = matmul(seq, params.w_c);
  return selective_scan(seq, delta, a, b, c, params.d_skip);
}

double s6_gradcheck(std::size_t length, std::size_t channels, std::size_t state_size,
                    std::uint64_t seed) {
  Rng rng(seed);
  auto params = S6Params<double>::init(channels, state_size, rng);
  // Larger step sizes than the init range so the recurrence carries signal.
  for (auto& v : params.b_delta.mutable_data()) v = rng.uniform(-0.5, 0.5);
  std::vector<double> xs(length * channels);
  for (auto& v : xs) v = rng.uniform(-1.0, 1.0);
  Tensor<double> x({length, channels}, std::move(xs), true);

  std::vector<Tensor<double>> wrt{x};
  std::vector<std::string> names{"x"};
  for (const auto& p : params.parameters()) wrt.push_back(p);
  for (const auto& n : params.names()) names.push_back(n);
  auto report = gradcheck<double>([&] { return sum(s6_forward(x, params)); }, wrt, {}, names);
  return report.max_rel_error;
}

template struct S6Params<float>;
template struct S6Params<double>;
template Tensor<float> selective_scan<float>(const Tensor<float>&, const Tensor<float>&,
                                             const Tensor<float>&, const Tensor<float>&,
                                             const Tensor<float>&, const Tensor<float>&);
template Tensor<double> selective_scan<double>(const Tensor<double>&, const Tensor<double>&,
                                               const Tensor<double>&, const Tensor<double>&,
                                               const Tensor<double>&, const Tensor<double>&);
template Tensor<float> s6_forward<float>(const Tensor<float>&, const S6Params<float>&);
template Tensor<double> s6_forward<double>(const Tensor<double>&, const S6Params<double>&);

}  // namespace smpcl
