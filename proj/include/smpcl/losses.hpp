#pragma once

#include "smpcl/image.hpp"
#include "smpcl/tensor.hpp"

namespace smpcl {

// Per-class soft Dice over (K,H,W) maps, averaged over classes:
//   loss_c = 1 - (2 <a_c,b_c> + eps) / (|a_c| + |b_c| + eps)
// with |v| = sum(v) or sum(v^2). The squared form makes dice(y,y) == 0 for
// soft maps as well as hard ones.
enum class DiceDenominator { kSquaredNorm, kSum };

inline constexpr double kDiceEps = 1e-6;
inline constexpr double kProbFloor = 1e-12;

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& a, const Tensor<T>& b,
                    DiceDenominator denominator = DiceDenominator::kSquaredNorm);

/// Partial cross-entropy over labeled pixels of `labels`, divided by their
/// count unless `normalize` is false. Throws ValidationError("no supervision")
/// when nothing is labeled.
template <typename T>
Tensor<T> pce_loss(const Tensor<T>& probs, const LabelMap& labels, bool normalize = true);

/// lambda * dice(y1, y2) + (1 - lambda) * (pce(y1) + pce(y2)). Terms with a
/// zero weight are not evaluated.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& y1, const Tensor<T>& y2, const LabelMap& labels,
                     double lambda, DiceDenominator denominator = DiceDenominator::kSquaredNorm);

/// Scalar form of the same weighting.
double combine_losses(double lambda, double dice, double pce1, double pce2);

}  // namespace smpcl
