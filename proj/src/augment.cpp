#include "ttaseg/augment.hpp"

#include <cmath>
#include <numbers>

#include "ttaseg/error.hpp"
#include "ttaseg/geometry.hpp"

namespace ttaseg {

void AugmentConfig::validate() const {
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) throw ArgumentError("flip probability must lie in [0, 1]");
  if (!(rotation_degrees >= 0.0)) throw ArgumentError("rotation range must be >= 0");
  if (!(translation_fraction >= 0.0 && translation_fraction < 0.5)) throw ArgumentError("translation fraction must lie in [0, 0.5)");
  if (!(zoom >= 0.0 && zoom < 1.0)) throw ArgumentError("zoom must lie in [0, 1)");
}

namespace {

void check_map(const Tensor& map, const char* who) {
  if (map.rank() != 2) throw ShapeError(std::string(who) + " expects an H x W map");
}

}  // namespace

Tensor flip_horizontal(const Tensor& map) {
  check_map(map, "flip_horizontal");
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out(map.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = map[y * w + (w - 1 - x)];
  }
  return out;
}

Tensor flip_vertical(const Tensor& map) {
  check_map(map, "flip_vertical");
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out(map.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = map[(h - 1 - y) * w + x];
  }
  return out;
}

Tensor rotate90(const Tensor& map) {
  check_map(map, "rotate90");
  const std::size_t n = map.dim(0);
  if (map.dim(1) != n) throw ShapeError("rotate90 expects a square map");
  Tensor out(map.shape());
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) out[y * n + x] = map[x * n + (n - 1 - y)];
  }
  return out;
}

AugmentedPair augment(const Tensor& image, const Tensor& mask, Rng& rng, const AugmentConfig& cfg) {
  if (image.shape() != mask.shape()) throw ShapeError("augment: image and mask shapes differ");
  check_map(image, "augment");
  if (!cfg.enabled) return {image, mask};
  cfg.validate();

  const bool flip_h = rng.bernoulli(cfg.flip_probability);
  const bool flip_v = rng.bernoulli(cfg.flip_probability);
  const double theta = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees) * std::numbers::pi / 180.0;
  const double side = static_cast<double>(image.dim(1));
  const double tx = rng.uniform(-cfg.translation_fraction, cfg.translation_fraction) * side;
  const double ty = rng.uniform(-cfg.translation_fraction, cfg.translation_fraction) * side;
  const double scale = rng.uniform(1.0 - cfg.zoom, 1.0 + cfg.zoom);

  AugmentedPair out{image, mask};
  if (flip_h) {
    out.image = flip_horizontal(out.image);
    out.mask = flip_horizontal(out.mask);
  }
  if (flip_v) {
    out.image = flip_vertical(out.image);
    out.mask = flip_vertical(out.mask);
  }
  if (theta == 0.0 && tx == 0.0 && ty == 0.0 && scale == 1.0) return out;

  const double c = scale * std::cos(theta);
  const double s = scale * std::sin(theta);
  const Matrix3 forward{{{c, -s, tx}, {s, c, ty}, {0.0, 0.0, 1.0}}};
  out.image = warp_matrix(out.image, forward, Interpolation::Bilinear).image;
  out.mask = warp_matrix(out.mask, forward, Interpolation::Nearest).image;
  return out;
}

}  // namespace ttaseg
