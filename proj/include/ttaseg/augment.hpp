#pragma once

#include "ttaseg/rng.hpp"
#include "ttaseg/tensor.hpp"

namespace ttaseg {

/// Train-time augmentation: independent horizontal/vertical flips, then a
/// random rotation, translation and zoom about the image centre.
struct AugmentConfig {
  bool enabled = true;
  double flip_probability = 0.5;
  double rotation_degrees = 15.0;     // uniform in [-r, r]
  double translation_fraction = 0.1;  // uniform in [-f, f] of the side length
  double zoom = 0.1;                  // scale uniform in [1 - z, 1 + z]

  void validate() const;
};

struct AugmentedPair {
  Tensor image;
  Tensor mask;
};

/// Applies one randomly drawn geometric transform to both tensors: bilinear
/// for the image, nearest-neighbour for the mask (which stays binary).
AugmentedPair augment(const Tensor& image, const Tensor& mask, Rng& rng, const AugmentConfig& cfg);

Tensor flip_horizontal(const Tensor& map);
Tensor flip_vertical(const Tensor& map);
/// Quarter turn of a square map: out(y, x) = in(x, n - 1 - y).
Tensor rotate90(const Tensor& map);

}  // namespace ttaseg
