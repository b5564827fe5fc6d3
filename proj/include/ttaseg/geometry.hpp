#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ttaseg/rng.hpp"
#include "ttaseg/tensor.hpp"

namespace ttaseg {

using Matrix3 = std::array<std::array<double, 3>, 3>;

Matrix3 multiply(const Matrix3& a, const Matrix3& b);
Matrix3 identity_matrix();

/// Rigid transform in homogeneous form:
///   [cos -sin tx]
///   [sin  cos ty]
///   [ 0    0   1]
/// Coordinates are relative to the image center ((W-1)/2, (H-1)/2); the
/// matrix rotates first, then translates.
struct AffineTransform {
  double tx = 0.0;     // pixels
  double ty = 0.0;     // pixels
  double theta = 0.0;  // radians
  Matrix3 matrix = identity_matrix();
};

/// Sampling ranges: translation uniform in [-T/2, T/2] pixels per axis,
/// rotation uniform in [-R/2, R/2] degrees.
struct TransformConfig {
  double translation_range = 20.0;  // T
  double rotation_range = 20.0;     // R, degrees

  void validate() const;
};

AffineTransform build_affine(double tx, double ty, double theta);
AffineTransform identity_transform();
AffineTransform sample_transform(Rng& rng, const TransformConfig& cfg);
/// Exact rigid inverse: rotation block transposed, translation -R^T t.
AffineTransform invert(const AffineTransform& a);

enum class Interpolation { Bilinear, Nearest };

struct WarpResult {
  Tensor image;                       // H x W
  std::vector<std::uint8_t> validity;  // H*W, row-major; 1 where the source sample was in-frame

  bool all_valid() const;
};

/// Inverse-mapping resample of an H x W image: destination pixel p reads the
/// source at a^-1 p. Out-of-frame samples produce 0 and validity 0.
WarpResult warp(const Tensor& image, const AffineTransform& a,
                Interpolation interp = Interpolation::Bilinear);

/// Same as warp() for an arbitrary invertible affine `forward` matrix
/// (used by train-time augmentation, which also zooms).
WarpResult warp_matrix(const Tensor& image, const Matrix3& forward,
                       Interpolation interp = Interpolation::Bilinear);

}  // namespace ttaseg
