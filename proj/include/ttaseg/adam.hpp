#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ttaseg/tensor.hpp"

namespace ttaseg {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Fresh state with moments shaped like `params`.
AdamState make_adam_state(std::span<Tensor* const> params, double alpha = 1e-3);

/// One bias-corrected Adam update of every parameter in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace ttaseg
