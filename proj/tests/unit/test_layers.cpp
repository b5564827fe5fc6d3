#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/layers.hpp"

using namespace ttaseg;

namespace {

// Direct zero-padded cross-correlation, no im2col.
Tensor conv_oracle(const Tensor& x, const ConvLayer& l) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = l.out_channels(), k = l.kernel(), s = l.stride;
  const std::size_t oh = (h + s - 1) / s, ow = (w + s - 1) / s;
  const long pad = static_cast<long>(k / 2);
  Tensor y({n, o, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = l.bias[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * s + ky) - pad;
                const long ix = static_cast<long>(ox * s + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += l.weight.at({oc, ic, ky, kx}) * x.at({b, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
          y.at({b, oc, oy, ox}) = acc;
        }
  return y;
}

ConvLayer random_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::uint64_t seed) {
  ConvLayer l = ConvLayer::zeros(in, out, k, stride);
  l.weight = test::random_tensor(l.weight.shape(), seed);
  l.bias = test::random_tensor(l.bias.shape(), seed + 1);
  return l;
}

// sum(out * probe) makes a scalar loss with a known upstream gradient.
double probe_dot(const Tensor& out, const Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d matches the sliding-window oracle") {
  struct Case {
    std::size_t n, c, h, w, o, k, s;
  };
  for (const Case cs : {Case{2, 3, 7, 5, 4, 3, 1}, Case{1, 2, 8, 8, 3, 3, 2}, Case{2, 4, 5, 6, 2, 1, 1},
                        Case{1, 1, 9, 9, 2, 5, 1}, Case{3, 2, 7, 7, 2, 3, 2}}) {
    const Tensor x = test::random_tensor({cs.n, cs.c, cs.h, cs.w}, 10 + cs.k);
    const ConvLayer l = random_conv(cs.c, cs.o, cs.k, cs.s, 20 + cs.s);
    const Tensor got = conv2d(x, l);
    const Tensor want = conv_oracle(x, l);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("conv2d accepts a single C x H x W image") {
  const Tensor x = test::random_tensor({2, 5, 5}, 1);
  const ConvLayer l = random_conv(2, 3, 3, 1, 2);
  const Tensor y = conv2d(x, l);
  CHECK(y.shape() == Shape{3, 5, 5});
  CHECK(y == conv2d(x.reshaped({1, 2, 5, 5}), l).reshaped({3, 5, 5}));
  CHECK_THROWS_AS(conv2d(test::random_tensor({1, 3, 5, 5}, 1), l), ShapeError);
}

TEST_CASE("conv2d backward matches central differences") {
  for (std::size_t stride : {1, 2}) {
    Tensor x = test::random_tensor({2, 2, 5, 6}, 31);
    ConvLayer l = random_conv(2, 3, 3, stride, 32);
    ConvCache cache;
    const Tensor y = conv2d(x, l, &cache);
    const Tensor probe = test::random_tensor(y.shape(), 33);
    const ConvGradients g = conv2d_backward(probe, cache, l);
    auto loss = [&] { return probe_dot(conv2d(x, l), probe); };
    for (std::size_t i = 0; i < l.weight.size(); ++i)
      CHECK(test::rel_error(g.weight[i], test::central_difference(loss, l.weight[i])) <= 1e-5);
    for (std::size_t i = 0; i < l.bias.size(); ++i)
      CHECK(test::rel_error(g.bias[i], test::central_difference(loss, l.bias[i])) <= 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(test::rel_error(g.input[i], test::central_difference(loss, x[i])) <= 1e-5);
  }
}

TEST_CASE("1x1x3x3 conv gradient case") {
  Tensor x = test::random_tensor({1, 1, 3, 3}, 41);
  ConvLayer l = random_conv(1, 1, 3, 1, 42);
  ConvCache cache;
  const Tensor probe = test::random_tensor({1, 1, 3, 3}, 43);
  conv2d(x, l, &cache);
  const ConvGradients g = conv2d_backward(probe, cache, l);
  auto loss = [&] { return probe_dot(conv2d(x, l), probe); };
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(test::rel_error(g.weight[i], test::central_difference(loss, l.weight[i])) <= 1e-5);
    CHECK(test::rel_error(g.input[i], test::central_difference(loss, x[i])) <= 1e-5);
  }
}

TEST_CASE("conv2d backward without a forward pass is a state error") {
  const ConvLayer l = random_conv(1, 1, 3, 1, 1);
  CHECK_THROWS_AS(conv2d_backward(Tensor({1, 1, 3, 3}), ConvCache{}, l), StateError);
}

TEST_CASE("batch norm train mode standardizes each channel") {
  // Wide spread so eps / var stays below the 1e-6 variance tolerance.
  const Tensor x = test::random_tensor({4, 3, 5, 5}, 51, -30.0, 70.0);
  BatchNormLayer bn = BatchNormLayer::identity(3);
  const Tensor y = batch_norm(x, bn, Mode::Train);
  const std::size_t plane = 25;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = y[(n * 3 + c) * plane + i];
        s += v;
        s2 += v * v;
      }
    const double mean = s / 100.0;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(s2 / 100.0 - mean * mean - 1.0) <= 1e-6);
  }
}

TEST_CASE("batch norm running statistics follow the moving average") {
  const Tensor x = test::random_tensor({2, 1, 4, 4}, 52, 1.0, 3.0);
  BatchNormLayer bn = BatchNormLayer::identity(1);
  batch_norm(x, bn, Mode::Train);
  const double mean = x.mean();
  double var = 0.0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  CHECK(bn.running_mean[0] == doctest::Approx(0.1 * mean).epsilon(1e-12));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.1 * var).epsilon(1e-12));
  const Tensor y = batch_norm(x, static_cast<const BatchNormLayer&>(bn));
  CHECK(y[0] == doctest::Approx((x[0] - bn.running_mean[0]) / std::sqrt(bn.running_var[0] + 1e-5)).epsilon(1e-12));
}

TEST_CASE("constant channel normalizes to zeros") {
  const Tensor x({2, 1, 3, 3}, 4.2);
  BatchNormLayer bn = BatchNormLayer::identity(1);
  const Tensor y = batch_norm(x, bn, Mode::Train);
  for (double v : y.data()) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("batch norm backward matches central differences in both modes") {
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    Tensor x = test::random_tensor({3, 2, 3, 4}, 61, -2.0, 2.0);
    BatchNormLayer bn = BatchNormLayer::identity(2);
    bn.scale = test::random_tensor({2}, 62, 0.5, 2.0);
    bn.shift = test::random_tensor({2}, 63);
    bn.running_mean = test::random_tensor({2}, 64);
    bn.running_var = test::random_tensor({2}, 65, 0.5, 2.0);
    BatchNormCache cache;
    BatchNormLayer work = bn;
    const Tensor y = batch_norm(x, work, mode, &cache);
    const Tensor probe = test::random_tensor(y.shape(), 66);
    const BatchNormGradients g = batch_norm_backward(probe, cache, bn);
    auto loss = [&] {
      BatchNormLayer tmp = bn;
      return probe_dot(batch_norm(x, tmp, mode), probe);
    };
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(test::rel_error(g.input[i], test::central_difference(loss, x[i])) <= 1e-5);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(test::rel_error(g.scale[c], test::central_difference(loss, bn.scale[c])) <= 1e-5);
      CHECK(test::rel_error(g.shift[c], test::central_difference(loss, bn.shift[c])) <= 1e-5);
    }
  }
}

TEST_CASE("relu and its gradient") {
  const Tensor x({4}, std::vector<double>{-1.0, 0.0, 2.0, -0.5});
  const Tensor y = relu(x);
  CHECK(y == Tensor({4}, std::vector<double>{0.0, 0.0, 2.0, 0.0}));
  const Tensor g = relu_backward(Tensor({4}, 1.0), y);
  CHECK(g == Tensor({4}, std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST_CASE("spatial dropout zeroes whole channels and rescales the rest") {
  const Tensor x = test::random_tensor({4, 8, 3, 3}, 71, 0.5, 1.0);
  Rng rng(72);
  DropoutCache cache;
  const Tensor y = spatial_dropout(x, 0.5, &rng, Mode::Train, &cache);
  std::size_t dropped = 0;
  for (std::size_t nc = 0; nc < 32; ++nc) {
    const double s = cache.channel_scale[nc];
    CHECK((s == 0.0 || s == 2.0));
    dropped += s == 0.0;
    for (std::size_t i = 0; i < 9; ++i) CHECK(y[nc * 9 + i] == x[nc * 9 + i] * s);
  }
  CHECK(dropped > 0);
  CHECK(dropped < 32);
  const Tensor probe = test::random_tensor(y.shape(), 73);
  const Tensor g = spatial_dropout_backward(probe, cache);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == probe[i] * cache.channel_scale[i / 9]);
}

TEST_CASE("spatial dropout infer mode and rate zero are the identity") {
  const Tensor x = test::random_tensor({2, 3, 4, 4}, 74);
  Rng rng(1);
  CHECK(spatial_dropout(x, 0.5, nullptr, Mode::Infer) == x);
  CHECK(spatial_dropout(x, 0.0, &rng, Mode::Train) == x);
  CHECK_THROWS_AS(spatial_dropout(x, 1.0, &rng, Mode::Train), ArgumentError);
  CHECK_THROWS_AS(spatial_dropout(x, 0.5, nullptr, Mode::Train), ArgumentError);
}

TEST_CASE("upsample, concat and split gradients") {
  Tensor x = test::random_tensor({2, 2, 3, 4}, 81);
  const Tensor up = upsample_nearest2x(x);
  CHECK(up.shape() == Shape{2, 2, 6, 8});
  CHECK(up.at({1, 1, 5, 7}) == x.at({1, 1, 2, 3}));
  const Tensor probe = test::random_tensor(up.shape(), 82);
  const Tensor g = upsample_nearest2x_backward(probe);
  auto loss = [&] { return probe_dot(upsample_nearest2x(x), probe); };
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(test::rel_error(g[i], test::central_difference(loss, x[i])) <= 1e-5);

  const Tensor a = test::random_tensor({2, 1, 3, 3}, 83);
  const Tensor b = test::random_tensor({2, 3, 3, 3}, 84);
  const Tensor cat = concat_channels(a, b);
  CHECK(cat.shape() == Shape{2, 4, 3, 3});
  const auto [ga, gb] = split_channels(cat, 1);
  CHECK(ga == a);
  CHECK(gb == b);
  CHECK_THROWS_AS(concat_channels(a, Tensor({2, 1, 4, 3})), ShapeError);
}

TEST_CASE("sigmoid is clamped and differentiates correctly") {
  Tensor z({4}, std::vector<double>{-100.0, -1.0, 0.0, 100.0});
  const Tensor p = sigmoid(z);
  CHECK(p[2] == 0.5);
  CHECK(p[0] > 0.0);
  CHECK(p[3] < 1.0);
  CHECK(p[1] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-15));
  const Tensor probe({4}, 1.0);
  const Tensor g = sigmoid_backward(probe, p);
  auto loss = [&] { return sigmoid(z)[1]; };
  CHECK(test::rel_error(g[1], test::central_difference(loss, z[1])) <= 1e-6);
}
