#pragma once

#include <cstddef>
#include <vector>

#include "ttaseg/rng.hpp"
#include "ttaseg/tensor.hpp"

namespace ttaseg {

enum class Mode { Train, Infer };

// Feature maps are N x C x H x W. Single-image helpers also accept C x H x W
// and return the same rank they were given.

struct ConvLayer {
  Tensor weight;  // out x in x k x k, k odd
  Tensor bias;    // out
  std::size_t stride = 1;

  static ConvLayer zeros(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                         std::size_t stride = 1);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }
};

struct ConvCache {
  Tensor input;  // always rank 4
  bool filled = false;
};

struct ConvGradients {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

/// Zero-padded ("same" at stride 1) cross-correlation. Output spatial size is
/// ceil(H / stride) x ceil(W / stride).
Tensor conv2d(const Tensor& input, const ConvLayer& layer, ConvCache* cache = nullptr);
ConvGradients conv2d_backward(const Tensor& grad_out, const ConvCache& cache, const ConvLayer& layer);

struct BatchNormLayer {
  Tensor scale;
  Tensor shift;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;  // weight kept on the old running value
  double eps = 1e-5;

  static BatchNormLayer identity(std::size_t channels);
  std::size_t channels() const { return scale.size(); }
};

struct BatchNormCache {
  Tensor normalized;            // x_hat, rank 4
  std::vector<double> inv_std;  // per channel
  Mode mode = Mode::Infer;
  bool filled = false;
};

struct BatchNormGradients {
  Tensor input;
  Tensor scale;
  Tensor shift;
};

/// Train mode normalizes with per-channel batch statistics (population
/// variance over N*H*W) and folds them into the running statistics; infer
/// mode uses the running statistics only.
Tensor batch_norm(const Tensor& input, BatchNormLayer& layer, Mode mode,
                  BatchNormCache* cache = nullptr);
/// Inference-only overload for read-only layers.
Tensor batch_norm(const Tensor& input, const BatchNormLayer& layer);
BatchNormGradients batch_norm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                       const BatchNormLayer& layer);

Tensor relu(const Tensor& input);
/// `output` is the forward result; gradient passes where output > 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& output);

struct DropoutCache {
  std::vector<double> channel_scale;  // N*C multipliers: 0 or 1/(1-rate)
  bool filled = false;
};

/// Zeroes whole channels with probability `rate` and rescales survivors by
/// 1/(1-rate) in train mode; identity in infer mode.
Tensor spatial_dropout(const Tensor& input, double rate, Rng* rng, Mode mode,
                       DropoutCache* cache = nullptr);
Tensor spatial_dropout_backward(const Tensor& grad_out, const DropoutCache& cache);

Tensor upsample_nearest2x(const Tensor& input);
Tensor upsample_nearest2x_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a gradient of concat_channels(a, b) back into its two parts.
std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t first_channels);

Tensor sigmoid(const Tensor& logits);
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& into, const Tensor& other);

}  // namespace ttaseg
