#include "smpcl/losses.hpp"

#include <cmath>
#include <string>

#include "smpcl/error.hpp"
#include "smpcl/ops.hpp"

namespace smpcl {

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& a, const Tensor<T>& b, DiceDenominator denominator) {
  if (a.shape() != b.shape() || a.rank() != 3) {
    throw ShapeError("dice_loss: expected equal (K,H,W) shapes, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t k = a.dim(0), n = a.dim(1) * a.dim(2);
  const bool squared = denominator == DiceDenominator::kSquaredNorm;
  const T* av = a.data().data();
  const T* bv = b.data().data();
  // inter[c] = <a_c,b_c>; na[c], nb[c] = norms in one pass.
  std::vector<double> inter(k, 0.0), na(k, 0.0), nb(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = c * n; i < (c + 1) * n; ++i) {
      inter[c] += double(av[i]) * double(bv[i]);
      na[c] += squared ? double(av[i]) * double(av[i]) : double(av[i]);
      nb[c] += squared ? double(bv[i]) * double(bv[i]) : double(bv[i]);
    }
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    loss += 1.0 - (2.0 * inter[c] + kDiceEps) / (na[c] + nb[c] + kDiceEps);
  }
  loss /= static_cast<double>(k);

  const bool tracked = detail::tracking<T>({&a, &b});
  auto out = detail::make_result<T>({1}, {static_cast<T>(loss)}, tracked);
  if (tracked) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    detail::record<T>("dice_loss", {an, bn}, out, [an, bn, on, k, n, squared, inter, na, nb] {
      const double g = on->grad[0] / static_cast<double>(k);
      const T* av = an->data.data();
      const T* bv = bn->data.data();
      for (int side = 0; side < 2; ++side) {
        auto& self = side == 0 ? an : bn;
        if (!self->requires_grad) continue;
        const T* sv = side == 0 ? av : bv;
        const T* ov = side == 0 ? bv : av;
        T* gs = self->grad_buffer();
        for (std::size_t c = 0; c < k; ++c) {
          const double den = na[c] + nb[c] + kDiceEps;
          const double ratio = (2.0 * inter[c] + kDiceEps) / den;
          for (std::size_t i = c * n; i < (c + 1) * n; ++i) {
            // d/dx of -(num/den); ratio is exactly 1 when a == b.
            const double d = squared ? -2.0 * (double(ov[i]) - double(sv[i]) * ratio) / den
                                     : -(2.0 * double(ov[i]) - ratio) / den;
            gs[i] += static_cast<T>(g * d);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pce_loss(const Tensor<T>& probs, const LabelMap& labels, bool normalize) {
  if (probs.rank() != 3 || probs.dim(1) != static_cast<std::size_t>(labels.height()) ||
      probs.dim(2) != static_cast<std::size_t>(labels.width())) {
    throw ShapeError("pce_loss: probabilities " + shape_str(probs.shape()) +
                     " do not match labels " + std::to_string(labels.height()) + "x" +
                     std::to_string(labels.width()));
  }
  const std::size_t k = probs.dim(0), n = labels.size();
  std::vector<std::size_t> picks;  // flat index into probs per labeled pixel
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = labels[i];
    if (l == kUnlabeled) continue;
    if (l >= k) throw ValidationError("pce_loss: label " + std::to_string(l) + " >= K");
    picks.push_back(l * n + i);
  }
  if (picks.empty()) throw ValidationError("pce_loss: no supervision (no labeled pixels)");
  const double scale_by = normalize ? 1.0 / static_cast<double>(picks.size()) : 1.0;
  const T* p = probs.data().data();
  double loss = 0.0;
  for (auto j : picks) loss -= std::log(std::max(double(p[j]), kProbFloor));
  loss *= scale_by;

  const bool tracked = detail::tracking<T>({&probs});
  auto out = detail::make_result<T>({1}, {static_cast<T>(loss)}, tracked);
  if (tracked) {
    auto pn = probs.node();
    auto* on = out.node().get();
    detail::record<T>("pce_loss", {pn}, out, [pn, on, picks = std::move(picks), scale_by] {
      const double g = on->grad[0] * scale_by;
      T* gp = pn->grad_buffer();
      const T* p = pn->data.data();
      for (auto j : picks) {
        if (double(p[j]) > kProbFloor) gp[j] += static_cast<T>(-g / double(p[j]));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& y1, const Tensor<T>& y2, const LabelMap& labels,
                     double lambda, DiceDenominator denominator) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda must lie in [0,1], got " + std::to_string(lambda));
  }
  if (y1.shape() != y2.shape()) {
    throw ShapeError("total_loss: y1 " + shape_str(y1.shape()) + " vs y2 " + shape_str(y2.shape()));
  }
  Tensor<T> dice, pce;
  if (lambda > 0.0) dice = scale(dice_loss(y1, y2, denominator), static_cast<T>(lambda));
  if (lambda < 1.0) {
    pce = scale(add(pce_loss(y1, labels), pce_loss(y2, labels)), static_cast<T>(1.0 - lambda));
  }
  if (!dice.defined()) return pce;
  if (!pce.defined()) return dice;
  return add(dice, pce);
}

double combine_losses(double lambda, double dice, double pce1, double pce2) {
  return lambda * dice + (1.0 - lambda) * (pce1 + pce2);
}

template Tensor<float> dice_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                        DiceDenominator);
template Tensor<double> dice_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                          DiceDenominator);
template Tensor<float> pce_loss<float>(const Tensor<float>&, const LabelMap&, bool);
template Tensor<double> pce_loss<double>(const Tensor<double>&, const LabelMap&, bool);
template Tensor<float> total_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                         const LabelMap&, double, DiceDenominator);
template Tensor<double> total_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                           const LabelMap&, double, DiceDenominator);

}  // namespace smpcl
