#include "ttaseg/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "ttaseg/error.hpp"
#include "ttaseg/parallel.hpp"

namespace ttaseg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Dims4 {
  std::size_t n, c, h, w;
  std::size_t plane() const { return h * w; }
  std::size_t item() const { return c * h * w; }
};

Dims4 dims_of(const Tensor& t, const char* who) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  throw ShapeError(std::string(who) + ": expected C x H x W or N x C x H x W, got " +
                   shape_to_string(t.shape()));
}

Tensor as_rank4(const Tensor& t, const char* who) {
  const Dims4 d = dims_of(t, who);
  return t.rank() == 4 ? t : t.reshaped({d.n, d.c, d.h, d.w});
}

Tensor restore_rank(Tensor t, std::size_t rank) {
  if (rank == 3) t.reshape({t.dim(1), t.dim(2), t.dim(3)});
  return t;
}

// Column matrix rows are (c, ky, kx); columns the output pixels (oy, ox).
void im2col(const double* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t oh, std::size_t ow, double* col) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * oh * ow;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
          double* out = row + oy * ow;
          if (iy < 0 || iy >= hh) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          const double* src = plane + iy * ww;
          if (stride == 1) {
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ow), ww - dx);
            std::fill(out, out + lo, 0.0);
            std::copy(src + lo + dx, src + hi + dx, out + lo);
            std::fill(out + hi, out + ow, 0.0);
            continue;
          }
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride) + dx;
            out[ox] = (ix >= 0 && ix < ww) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t oh, std::size_t ow, double* img) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    double* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * oh * ow;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
          if (iy < 0 || iy >= hh) continue;
          const double* in = row + oy * ow;
          double* dst = plane + iy * ww;
          if (stride == 1) {
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ow), ww - dx);
            for (std::ptrdiff_t ox = lo; ox < hi; ++ox) dst[ox + dx] += in[ox];
            continue;
          }
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride) + dx;
            if (ix >= 0 && ix < ww) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvLayer& layer) { return layer.kernel() == 1 && layer.stride == 1; }

void check_conv_layer(const ConvLayer& layer) {
  if (layer.weight.rank() != 4 || layer.weight.dim(2) != layer.weight.dim(3) ||
      layer.weight.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: weight must be out x in x k x k with odd k");
  }
  if (layer.bias.size() != layer.out_channels()) throw ShapeError("conv2d: bias size mismatch");
  if (layer.stride == 0) throw ArgumentError("conv2d: stride must be positive");
}

}  // namespace

ConvLayer ConvLayer::zeros(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                           std::size_t stride) {
  return ConvLayer{Tensor({out_channels, in_channels, kernel, kernel}), Tensor({out_channels}), stride};
}

Tensor conv2d(const Tensor& input, const ConvLayer& layer, ConvCache* cache) {
  check_conv_layer(layer);
  const Dims4 d = dims_of(input, "conv2d");
  if (d.c != layer.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, layer expects " +
                     std::to_string(layer.in_channels()));
  }
  const std::size_t k = layer.kernel();
  const std::size_t s = layer.stride;
  const std::size_t oh = (d.h - 1) / s + 1;
  const std::size_t ow = (d.w - 1) / s + 1;
  const std::size_t out_c = layer.out_channels();
  const std::size_t rows = d.c * k * k;

  Tensor out = Tensor::uninitialized({d.n, out_c, oh, ow});
  const ConstMatrixMap weights(layer.weight.raw(), static_cast<Eigen::Index>(out_c),
                               static_cast<Eigen::Index>(rows));
  const bool pointwise = is_pointwise(layer);
  if (cache) {
    cache->input = as_rank4(input, "conv2d");
    cache->filled = true;
  }
  parallel_for(d.n, [&](std::size_t n) {
    const double* x = input.raw() + n * d.item();
    MatrixMap y(out.raw() + n * out_c * oh * ow, static_cast<Eigen::Index>(out_c),
                static_cast<Eigen::Index>(oh * ow));
    if (pointwise) {
      y.noalias() = weights * ConstMatrixMap(x, static_cast<Eigen::Index>(rows),
                                             static_cast<Eigen::Index>(oh * ow));
    } else {
      thread_local DoubleBuffer col;
      col.resize(rows * oh * ow);
      im2col(x, d.c, d.h, d.w, k, s, oh, ow, col.data());
      y.noalias() = weights * ConstMatrixMap(col.data(), static_cast<Eigen::Index>(rows),
                                             static_cast<Eigen::Index>(oh * ow));
    }
    for (std::size_t o = 0; o < out_c; ++o) y.row(static_cast<Eigen::Index>(o)).array() += layer.bias[o];
  });
  return restore_rank(std::move(out), input.rank());
}

ConvGradients conv2d_backward(const Tensor& grad_out, const ConvCache& cache, const ConvLayer& layer) {
  if (!cache.filled) throw StateError("conv2d_backward: no cached forward pass");
  check_conv_layer(layer);
  const Tensor& input = cache.input;
  const Dims4 d = dims_of(input, "conv2d_backward");
  const std::size_t k = layer.kernel();
  const std::size_t s = layer.stride;
  const std::size_t oh = (d.h - 1) / s + 1;
  const std::size_t ow = (d.w - 1) / s + 1;
  const std::size_t out_c = layer.out_channels();
  const std::size_t rows = d.c * k * k;
  const Dims4 g = dims_of(grad_out, "conv2d_backward");
  if (g.n != d.n || g.c != out_c || g.h != oh || g.w != ow) {
    throw ShapeError("conv2d_backward: gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match the cached forward pass");
  }

  ConvGradients grads{Tensor({d.n, d.c, d.h, d.w}), Tensor(layer.weight.shape()), Tensor({out_c})};
  std::vector<Tensor> partial_weight(d.n);
  const ConstMatrixMap weights(layer.weight.raw(), static_cast<Eigen::Index>(out_c),
                               static_cast<Eigen::Index>(rows));

  parallel_for(d.n, [&](std::size_t n) {
    const double* x = input.raw() + n * d.item();
    const ConstMatrixMap gy(grad_out.raw() + n * out_c * oh * ow, static_cast<Eigen::Index>(out_c),
                            static_cast<Eigen::Index>(oh * ow));
    partial_weight[n] = Tensor::uninitialized(layer.weight.shape());
    MatrixMap gw(partial_weight[n].raw(), static_cast<Eigen::Index>(out_c),
                 static_cast<Eigen::Index>(rows));
    double* gx = grads.input.raw() + n * d.item();
    if (is_pointwise(layer)) {
      gw.noalias() = gy * ConstMatrixMap(x, static_cast<Eigen::Index>(rows),
                                         static_cast<Eigen::Index>(oh * ow))
                              .transpose();
      MatrixMap(gx, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(oh * ow)).noalias() =
          weights.transpose() * gy;
    } else {
      thread_local DoubleBuffer col;
      col.resize(rows * oh * ow);
      im2col(x, d.c, d.h, d.w, k, s, oh, ow, col.data());
      const ConstMatrixMap col_m(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(oh * ow));
      gw.noalias() = gy * col_m.transpose();
      thread_local DoubleBuffer grad_col;
      grad_col.resize(rows * oh * ow);
      MatrixMap(grad_col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(oh * ow)).noalias() =
          weights.transpose() * gy;
      col2im_add(grad_col.data(), d.c, d.h, d.w, k, s, oh, ow, gx);
    }
  });

  // Fixed order over the batch keeps results independent of thread count.
  for (std::size_t n = 0; n < d.n; ++n) add_inplace(grads.weight, partial_weight[n]);
  const std::size_t plane = oh * ow;
  for (std::size_t o = 0; o < out_c; ++o) {
    double acc = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* gy = grad_out.raw() + (n * out_c + o) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += gy[i];
    }
    grads.bias[o] = acc;
  }
  grads.input = restore_rank(std::move(grads.input), grad_out.rank());
  return grads;
}

BatchNormLayer BatchNormLayer::identity(std::size_t channels) {
  BatchNormLayer bn;
  bn.scale = Tensor({channels}, 1.0);
  bn.shift = Tensor({channels}, 0.0);
  bn.running_mean = Tensor({channels}, 0.0);
  bn.running_var = Tensor({channels}, 1.0);
  return bn;
}

namespace {

Tensor batch_norm_apply(const Tensor& input, const BatchNormLayer& layer, const std::vector<double>& mean,
                        const std::vector<double>& inv_std, Tensor* normalized) {
  const Dims4 d = dims_of(input, "batch_norm");
  Tensor out = Tensor::uninitialized(input.shape());
  if (normalized) *normalized = Tensor::uninitialized({d.n, d.c, d.h, d.w});
  const std::size_t plane = d.plane();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t base = (n * d.c + c) * plane;
      const double m = mean[c];
      const double is = inv_std[c];
      const double g = layer.scale[c];
      const double b = layer.shift[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (input[base + i] - m) * is;
        if (normalized) (*normalized)[base + i] = xhat;
        out[base + i] = g * xhat + b;
      }
    }
  }
  return out;
}

void check_bn(const Tensor& input, const BatchNormLayer& layer) {
  const Dims4 d = dims_of(input, "batch_norm");
  if (d.c != layer.channels()) {
    throw ShapeError("batch_norm: input has " + std::to_string(d.c) + " channels, layer expects " +
                     std::to_string(layer.channels()));
  }
}

}  // namespace

Tensor batch_norm(const Tensor& input, const BatchNormLayer& layer) {
  check_bn(input, layer);
  const std::size_t ch = layer.channels();
  std::vector<double> mean(ch), inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    mean[c] = layer.running_mean[c];
    inv_std[c] = 1.0 / std::sqrt(layer.running_var[c] + layer.eps);
  }
  return batch_norm_apply(input, layer, mean, inv_std, nullptr);
}

Tensor batch_norm(const Tensor& input, BatchNormLayer& layer, Mode mode, BatchNormCache* cache) {
  check_bn(input, layer);
  const Dims4 d = dims_of(input, "batch_norm");
  const std::size_t ch = layer.channels();
  std::vector<double> mean(ch), inv_std(ch);
  if (mode == Mode::Infer) {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = layer.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(layer.running_var[c] + layer.eps);
    }
  } else {
    const std::size_t plane = d.plane();
    const double count = static_cast<double>(d.n * plane);
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* x = input.raw() + (n * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += x[i];
      }
      const double m = s / count;
      double ss = 0.0;
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* x = input.raw() + (n * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (x[i] - m) * (x[i] - m);
      }
      const double var = ss / count;
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + layer.eps);
      layer.running_mean[c] = layer.momentum * layer.running_mean[c] + (1.0 - layer.momentum) * m;
      layer.running_var[c] = layer.momentum * layer.running_var[c] + (1.0 - layer.momentum) * var;
    }
  }
  Tensor out = batch_norm_apply(input, layer, mean, inv_std, cache ? &cache->normalized : nullptr);
  if (cache) {
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
    cache->filled = true;
  }
  return out;
}

BatchNormGradients batch_norm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                       const BatchNormLayer& layer) {
  if (!cache.filled) throw StateError("batch_norm_backward: no cached forward pass");
  const Dims4 d = dims_of(grad_out, "batch_norm_backward");
  if (d.n * d.item() != cache.normalized.size() || d.c != layer.channels()) {
    throw ShapeError("batch_norm_backward: gradient does not match the cached forward pass");
  }
  BatchNormGradients grads{Tensor(grad_out.shape()), Tensor({d.c}), Tensor({d.c})};
  const std::size_t plane = d.plane();
  const double count = static_cast<double>(d.n * plane);
  const Tensor& xhat = cache.normalized;
  for (std::size_t c = 0; c < d.c; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t base = (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += grad_out[base + i];
        sum_gx += grad_out[base + i] * xhat[base + i];
      }
    }
    grads.shift[c] = sum_g;
    grads.scale[c] = sum_gx;
    const double g = layer.scale[c];
    const double is = cache.inv_std[c];
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t base = (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (cache.mode == Mode::Train) {
          grads.input[base + i] =
              g * is * (grad_out[base + i] - sum_g / count - xhat[base + i] * sum_gx / count);
        } else {
          grads.input[base + i] = g * is * grad_out[base + i];
        }
      }
    }
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = Tensor::uninitialized(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& output) {
  if (grad_out.shape() != output.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor g = Tensor::uninitialized(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

Tensor spatial_dropout(const Tensor& input, double rate, Rng* rng, Mode mode, DropoutCache* cache) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("spatial_dropout: rate must lie in [0, 1)");
  const Dims4 d = dims_of(input, "spatial_dropout");
  std::vector<double> scale(d.n * d.c, 1.0);
  if (mode == Mode::Train && rate > 0.0) {
    if (!rng) throw ArgumentError("spatial_dropout: train mode needs a generator");
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& s : scale) s = rng->bernoulli(rate) ? 0.0 : keep_scale;
  }
  Tensor out = Tensor::uninitialized(input.shape());
  const std::size_t plane = d.plane();
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    for (std::size_t i = 0; i < plane; ++i) out[nc * plane + i] = input[nc * plane + i] * scale[nc];
  }
  if (cache) {
    cache->channel_scale = std::move(scale);
    cache->filled = true;
  }
  return out;
}

Tensor spatial_dropout_backward(const Tensor& grad_out, const DropoutCache& cache) {
  if (!cache.filled) throw StateError("spatial_dropout_backward: no cached forward pass");
  const Dims4 d = dims_of(grad_out, "spatial_dropout_backward");
  if (cache.channel_scale.size() != d.n * d.c) throw ShapeError("spatial_dropout_backward: shape mismatch");
  Tensor g = Tensor::uninitialized(grad_out.shape());
  const std::size_t plane = d.plane();
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    for (std::size_t i = 0; i < plane; ++i) g[nc * plane + i] = grad_out[nc * plane + i] * cache.channel_scale[nc];
  }
  return g;
}

Tensor upsample_nearest2x(const Tensor& input) {
  const Dims4 d = dims_of(input, "upsample_nearest2x");
  Tensor out = Tensor::uninitialized({d.n, d.c, 2 * d.h, 2 * d.w});
  const std::size_t ow = 2 * d.w;
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* src = input.raw() + nc * d.plane();
    double* dst = out.raw() + nc * 4 * d.plane();
    for (std::size_t y = 0; y < 2 * d.h; ++y) {
      for (std::size_t x = 0; x < ow; ++x) dst[y * ow + x] = src[(y / 2) * d.w + x / 2];
    }
  }
  return restore_rank(std::move(out), input.rank());
}

Tensor upsample_nearest2x_backward(const Tensor& grad_out) {
  const Dims4 d = dims_of(grad_out, "upsample_nearest2x_backward");
  if (d.h % 2 || d.w % 2) throw ShapeError("upsample_nearest2x_backward: odd spatial size");
  const std::size_t h = d.h / 2;
  const std::size_t w = d.w / 2;
  Tensor g = Tensor::uninitialized({d.n, d.c, h, w});
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* src = grad_out.raw() + nc * d.plane();
    double* dst = g.raw() + nc * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double* p = src + 2 * y * d.w + 2 * x;
        dst[y * w + x] = p[0] + p[1] + p[d.w] + p[d.w + 1];
      }
    }
  }
  return restore_rank(std::move(g), grad_out.rank());
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Dims4 da = dims_of(a, "concat_channels");
  const Dims4 db = dims_of(b, "concat_channels");
  if (da.n != db.n || da.h != db.h || da.w != db.w || a.rank() != b.rank()) {
    throw ShapeError("concat_channels: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor out = Tensor::uninitialized({da.n, da.c + db.c, da.h, da.w});
  for (std::size_t n = 0; n < da.n; ++n) {
    double* dst = out.raw() + n * (da.item() + db.item());
    std::copy_n(a.raw() + n * da.item(), da.item(), dst);
    std::copy_n(b.raw() + n * db.item(), db.item(), dst + da.item());
  }
  return restore_rank(std::move(out), a.rank());
}

std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t first_channels) {
  const Dims4 d = dims_of(grad, "split_channels");
  if (first_channels == 0 || first_channels >= d.c) throw ShapeError("split_channels: bad split point");
  const std::size_t second = d.c - first_channels;
  Tensor a = Tensor::uninitialized({d.n, first_channels, d.h, d.w});
  Tensor b = Tensor::uninitialized({d.n, second, d.h, d.w});
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* src = grad.raw() + n * d.item();
    std::copy_n(src, first_channels * d.plane(), a.raw() + n * first_channels * d.plane());
    std::copy_n(src + first_channels * d.plane(), second * d.plane(), b.raw() + n * second * d.plane());
  }
  return {restore_rank(std::move(a), grad.rank()), restore_rank(std::move(b), grad.rank())};
}

Tensor sigmoid(const Tensor& logits) {
  // Clamped so outputs stay strictly inside (0, 1) in double precision.
  constexpr double kLogitLimit = 30.0;
  Tensor out = Tensor::uninitialized(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = std::clamp(logits[i], -kLogitLimit, kLogitLimit);
    out[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
  if (grad_out.shape() != output.shape()) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor g = Tensor::uninitialized(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * output[i] * (1.0 - output[i]);
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& into, const Tensor& other) {
  if (into.size() != other.size()) {
    throw ShapeError("add: " + shape_to_string(into.shape()) + " vs " + shape_to_string(other.shape()));
  }
  double* dst = into.raw();
  const double* src = other.raw();
  for (std::size_t i = 0; i < into.size(); ++i) dst[i] += src[i];
}

}  // namespace ttaseg
