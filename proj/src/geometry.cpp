#include "ttaseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ttaseg/error.hpp"

namespace ttaseg {

Matrix3 multiply(const Matrix3& a, const Matrix3& b) {
  Matrix3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  }
  return c;
}

Matrix3 identity_matrix() { return Matrix3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}}; }

void TransformConfig::validate() const {
  if (!(translation_range >= 0.0) || !std::isfinite(translation_range)) {
    throw ArgumentError("translation range T must be finite and >= 0");
  }
  if (!(rotation_range >= 0.0) || !std::isfinite(rotation_range)) {
    throw ArgumentError("rotation range R must be finite and >= 0");
  }
}

AffineTransform build_affine(double tx, double ty, double theta) {
  if (!std::isfinite(tx) || !std::isfinite(ty) || !std::isfinite(theta)) {
    throw ArgumentError("build_affine: parameters must be finite");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  AffineTransform a;
  a.tx = tx;
  a.ty = ty;
  a.theta = theta;
  a.matrix = Matrix3{{{c, -s, tx}, {s, c, ty}, {0.0, 0.0, 1.0}}};
  return a;
}

AffineTransform identity_transform() { return build_affine(0.0, 0.0, 0.0); }

AffineTransform sample_transform(Rng& rng, const TransformConfig& cfg) {
  cfg.validate();
  const double half_t = cfg.translation_range / 2.0;
  const double half_r = std::numbers::pi * cfg.rotation_range / 360.0;
  const double tx = rng.uniform(-half_t, half_t);
  const double ty = rng.uniform(-half_t, half_t);
  const double theta = rng.uniform(-half_r, half_r);
  return build_affine(tx, ty, theta);
}

AffineTransform invert(const AffineTransform& a) {
  const Matrix3& m = a.matrix;
  // R^T and -R^T t.
  const double itx = -(m[0][0] * m[0][2] + m[1][0] * m[1][2]);
  const double ity = -(m[0][1] * m[0][2] + m[1][1] * m[1][2]);
  AffineTransform inv;
  inv.tx = itx;
  inv.ty = ity;
  inv.theta = -a.theta;
  inv.matrix = Matrix3{{{m[0][0], m[1][0], itx}, {m[0][1], m[1][1], ity}, {0.0, 0.0, 1.0}}};
  return inv;
}

bool WarpResult::all_valid() const {
  return std::all_of(validity.begin(), validity.end(), [](std::uint8_t v) { return v != 0; });
}

namespace {

constexpr double kEdgeTolerance = 1e-9;

Matrix3 general_inverse(const Matrix3& m) {
  const double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) {
    throw ArgumentError("warp_matrix: transform is not invertible");
  }
  const double a = m[1][1] / det;
  const double b = -m[0][1] / det;
  const double c = -m[1][0] / det;
  const double d = m[0][0] / det;
  return Matrix3{{{a, b, -(a * m[0][2] + b * m[1][2])},
                  {c, d, -(c * m[0][2] + d * m[1][2])},
                  {0.0, 0.0, 1.0}}};
}

// `inv` maps centered destination coordinates to centered source coordinates.
WarpResult resample(const Tensor& image, const Matrix3& inv, Interpolation interp) {
  if (image.empty() || image.rank() != 2) throw ArgumentError("warp: expected a non-empty H x W image");
  const std::size_t h = image.dim(0);
  const std::size_t w = image.dim(1);
  if (h < 2 || w < 2) throw ArgumentError("warp: image must be at least 2 x 2");

  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double max_x = static_cast<double>(w - 1);
  const double max_y = static_cast<double>(h - 1);

  WarpResult out{Tensor({h, w}), std::vector<std::uint8_t>(h * w, 0)};
  const double* src = image.raw();
  double* dst = out.image.raw();

  for (std::size_t y = 0; y < h; ++y) {
    const double v = static_cast<double>(y) - cy;
    for (std::size_t x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) - cx;
      double sx = inv[0][0] * u + inv[0][1] * v + inv[0][2] + cx;
      double sy = inv[1][0] * u + inv[1][1] * v + inv[1][2] + cy;
      if (sx < -kEdgeTolerance || sx > max_x + kEdgeTolerance || sy < -kEdgeTolerance ||
          sy > max_y + kEdgeTolerance) {
        continue;
      }
      sx = std::clamp(sx, 0.0, max_x);
      sy = std::clamp(sy, 0.0, max_y);
      const std::size_t idx = y * w + x;
      out.validity[idx] = 1;
      if (interp == Interpolation::Nearest) {
        const auto nx = static_cast<std::size_t>(std::floor(sx + 0.5));
        const auto ny = static_cast<std::size_t>(std::floor(sy + 0.5));
        dst[idx] = src[std::min(ny, h - 1) * w + std::min(nx, w - 1)];
        continue;
      }
      auto x0 = static_cast<std::size_t>(std::floor(sx));
      auto y0 = static_cast<std::size_t>(std::floor(sy));
      x0 = std::min(x0, w - 2);
      y0 = std::min(y0, h - 2);
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      const double* row0 = src + y0 * w + x0;
      const double* row1 = row0 + w;
      dst[idx] = (1.0 - fy) * ((1.0 - fx) * row0[0] + fx * row0[1]) +
                 fy * ((1.0 - fx) * row1[0] + fx * row1[1]);
    }
  }
  return out;
}

}  // namespace

WarpResult warp(const Tensor& image, const AffineTransform& a, Interpolation interp) {
  return resample(image, invert(a).matrix, interp);
}

WarpResult warp_matrix(const Tensor& image, const Matrix3& forward, Interpolation interp) {
  return resample(image, general_inverse(forward), interp);
}

}  // namespace ttaseg
