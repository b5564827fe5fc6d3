#include "ttaseg/objective.hpp"

#include <algorithm>
#include <cmath>

#include "ttaseg/error.hpp"

namespace ttaseg {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  if (a.empty()) throw ShapeError(std::string(who) + ": empty input");
}

double clip(double p) { return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip); }

struct DiceSums {
  double intersection = 0.0;
  double total = 0.0;
};

DiceSums dice_sums(const Tensor& t, const Tensor& p) {
  DiceSums s;
  double sum_t = 0.0;
  double sum_p = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    s.intersection += t[i] * p[i];
    sum_t += t[i];
    sum_p += p[i];
  }
  s.total = sum_t + sum_p;
  return s;
}

}  // namespace

double bce(const Tensor& y_true, const Tensor& y_pred) {
  check_pair(y_true, y_pred, "bce");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double p = clip(y_pred[i]);
    const double t = y_true[i];
    s -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return s / static_cast<double>(y_true.size());
}

double soft_dice(const Tensor& y_true, const Tensor& y_pred) {
  check_pair(y_true, y_pred, "soft_dice");
  const DiceSums s = dice_sums(y_true, y_pred);
  return (2.0 * s.intersection + kDiceSmoothing) / (s.total + kDiceSmoothing);
}

LossBreakdown combined_loss(const Tensor& y_true, const Tensor& y_pred) {
  LossBreakdown out;
  out.bce = bce(y_true, y_pred);
  out.soft_dice = soft_dice(y_true, y_pred);
  out.combined = out.bce - std::exp(1.0 + out.soft_dice);
  return out;
}

Tensor bce_gradient(const Tensor& y_true, const Tensor& y_pred) {
  check_pair(y_true, y_pred, "bce_gradient");
  Tensor g(y_true.shape());
  const double inv_n = 1.0 / static_cast<double>(y_true.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double raw = y_pred[i];
    if (raw < kProbabilityClip || raw > 1.0 - kProbabilityClip) continue;  // clipped: flat
    const double t = y_true[i];
    g[i] = inv_n * (-t / raw + (1.0 - t) / (1.0 - raw));
  }
  return g;
}

Tensor soft_dice_gradient(const Tensor& y_true, const Tensor& y_pred) {
  check_pair(y_true, y_pred, "soft_dice_gradient");
  const DiceSums s = dice_sums(y_true, y_pred);
  const double num = 2.0 * s.intersection + kDiceSmoothing;
  const double den = s.total + kDiceSmoothing;
  Tensor g(y_true.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (2.0 * y_true[i] * den - num) / (den * den);
  return g;
}

Tensor loss_gradient(const Tensor& y_true, const Tensor& y_pred) {
  Tensor g = bce_gradient(y_true, y_pred);
  const Tensor dd = soft_dice_gradient(y_true, y_pred);
  const double factor = std::exp(1.0 + soft_dice(y_true, y_pred));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= factor * dd[i];
  return g;
}

double hard_dice(const Tensor& mask_a, const Tensor& mask_b) {
  check_pair(mask_a, mask_b, "hard_dice");
  std::size_t inter = 0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  for (std::size_t i = 0; i < mask_a.size(); ++i) {
    const double a = mask_a[i];
    const double b = mask_b[i];
    if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0)) throw ArgumentError("hard_dice: masks must be binary");
    count_a += a == 1.0;
    count_b += b == 1.0;
    inter += (a == 1.0 && b == 1.0);
  }
  if (count_a + count_b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(count_a + count_b);
}

}  // namespace ttaseg
