#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/geometry.hpp"

using namespace ttaseg;

namespace {

Tensor smooth_image(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      t[y * n + x] = 0.5 + 0.25 * std::sin(0.2 * static_cast<double>(x)) * std::cos(0.15 * static_cast<double>(y));
    }
  }
  return t;
}

}  // namespace

TEST_CASE("identity transform reproduces the image exactly") {
  const Tensor img = test::random_tensor({9, 7}, 1, 0.0, 1.0);
  const WarpResult r = warp(img, identity_transform());
  CHECK(r.image == img);
  CHECK(r.all_valid());
  CHECK(warp(img, build_affine(0, 0, 0), Interpolation::Nearest).image == img);
}

TEST_CASE("integer translation shifts pixels and flags the uncovered strip") {
  const std::size_t n = 8;
  const Tensor img = test::random_tensor({n, n}, 2, 0.0, 1.0);
  const WarpResult r = warp(img, build_affine(2.0, -1.0, 0.0));
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const long sx = static_cast<long>(x) - 2;
      const long sy = static_cast<long>(y) + 1;
      const bool inside = sx >= 0 && sy < static_cast<long>(n);
      CHECK(static_cast<bool>(r.validity[y * n + x]) == inside);
      const double expected = inside ? img[static_cast<std::size_t>(sy) * n + static_cast<std::size_t>(sx)] : 0.0;
      CHECK(r.image[y * n + x] == expected);
    }
  }
}

TEST_CASE("quarter turn about the centre matches the index formula") {
  const std::size_t n = 6;
  const Tensor img = test::random_tensor({n, n}, 3, 0.0, 1.0);
  const WarpResult r = warp(img, build_affine(0.0, 0.0, std::numbers::pi / 2.0));
  CHECK(r.all_valid());
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      // Destination (x, y) reads the source at R^-1 about the centre: (y, n-1-x).
      CHECK(r.image[y * n + x] == doctest::Approx(img[(n - 1 - x) * n + y]).epsilon(1e-12));
    }
  }
}

TEST_CASE("invert composes to the identity matrix") {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const AffineTransform a = sample_transform(rng, TransformConfig{});
    const Matrix3 m = multiply(a.matrix, invert(a).matrix);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) CHECK(std::abs(m[r][c] - (r == c ? 1.0 : 0.0)) < 1e-12);
    }
    CHECK(invert(a).theta == -a.theta);
  }
}

TEST_CASE("sampled transforms stay inside the configured ranges") {
  Rng rng(5);
  const TransformConfig cfg{20.0, 20.0};
  for (int i = 0; i < 2000; ++i) {
    const AffineTransform a = sample_transform(rng, cfg);
    CHECK(std::abs(a.tx) <= 10.0);
    CHECK(std::abs(a.ty) <= 10.0);
    CHECK(std::abs(a.theta) <= 10.0 * std::numbers::pi / 180.0);
  }
  const AffineTransform z = sample_transform(rng, TransformConfig{0.0, 0.0});
  CHECK(z.tx == 0.0);
  CHECK(z.ty == 0.0);
  CHECK(z.theta == 0.0);
}

TEST_CASE("round trip on a smooth image stays close on mutually valid pixels") {
  const std::size_t n = 64;
  const Tensor img = smooth_image(n);
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    const AffineTransform a = sample_transform(rng, TransformConfig{});
    const WarpResult fwd = warp(img, a);
    const WarpResult back = warp(fwd.image, invert(a));
    double err = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n * n; ++p) {
      if (!back.validity[p]) continue;
      // The pixel must also have read valid data on the way out.
      const double x = static_cast<double>(p % n) - (n - 1) / 2.0;
      const double y = static_cast<double>(p / n) - (n - 1) / 2.0;
      const double fx = std::cos(a.theta) * x - std::sin(a.theta) * y + a.tx + (n - 1) / 2.0;
      const double fy = std::sin(a.theta) * x + std::cos(a.theta) * y + a.ty + (n - 1) / 2.0;
      if (fx < 1 || fy < 1 || fx > n - 2.0 || fy > n - 2.0) continue;
      err += std::abs(back.image[p] - img[p]);
      ++count;
    }
    REQUIRE(count > 0);
    CHECK(err / static_cast<double>(count) <= 0.02);
  }
}

TEST_CASE("nearest interpolation keeps masks binary") {
  Tensor mask({16, 16});
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 16 > 4 && i / 16 < 9) ? 1.0 : 0.0;
  const WarpResult r = warp(mask, build_affine(1.3, -2.7, 0.3), Interpolation::Nearest);
  for (double v : r.image.data()) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("geometry argument errors") {
  CHECK_THROWS_AS(build_affine(std::nan(""), 0, 0), ArgumentError);
  CHECK_THROWS_AS(TransformConfig({-1.0, 20.0}).validate(), ArgumentError);
  CHECK_THROWS_AS(warp(Tensor({4}), identity_transform()), ArgumentError);
  CHECK_THROWS_AS(warp(Tensor({1, 4}), identity_transform()), ArgumentError);
}
