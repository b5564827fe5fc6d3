#pragma once

#include "ttaseg/tensor.hpp"

namespace ttaseg {

inline constexpr double kProbabilityClip = 1e-7;  // BCE works on [eps, 1 - eps]
inline constexpr double kDiceSmoothing = 1.0;

struct LossBreakdown {
  double bce = 0.0;
  double soft_dice = 0.0;
  double combined = 0.0;  // bce - exp(1 + soft_dice)
  double l1_term = 0.0;

  double total() const { return combined + l1_term; }
};

/// Mean binary cross-entropy over all elements.
double bce(const Tensor& y_true, const Tensor& y_pred);
/// (2 sum(t p) + s) / (sum t + sum p + s) with s = kDiceSmoothing.
double soft_dice(const Tensor& y_true, const Tensor& y_pred);
LossBreakdown combined_loss(const Tensor& y_true, const Tensor& y_pred);

Tensor bce_gradient(const Tensor& y_true, const Tensor& y_pred);
Tensor soft_dice_gradient(const Tensor& y_true, const Tensor& y_pred);
/// d(combined)/d(y_pred) = dBCE - exp(1 + D) dD.
Tensor loss_gradient(const Tensor& y_true, const Tensor& y_pred);

/// 2|A n B| / (|A| + |B|) for binary masks; 1 when both are empty.
/// Throws ArgumentError for values other than 0 and 1.
double hard_dice(const Tensor& mask_a, const Tensor& mask_b);

}  // namespace ttaseg
