#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttaseg/layers.hpp"

namespace ttaseg {

/// Batch norm -> ReLU -> convolution.
struct BacBlock {
  BatchNormLayer bn;
  ConvLayer conv;
};

/// Stack of BAC blocks plus a shortcut. The shortcut is the identity when
/// channel counts agree, otherwise a 1x1 projection (the L1-penalized set).
struct ResidualSubModule {
  std::vector<BacBlock> blocks;
  std::optional<ConvLayer> projection;

  std::size_t in_channels() const { return blocks.front().bn.channels(); }
  std::size_t out_channels() const { return blocks.back().conv.out_channels(); }
};

struct EncoderLevel {
  ResidualSubModule block;
  ConvLayer downsample;  // 3x3, stride 2
};

struct DecoderLevel {
  ConvLayer upsample;  // 3x3 applied after nearest-neighbour x2
  ResidualSubModule block;
};

struct ModelConfig {
  std::size_t depth = 3;
  std::size_t base_width = 8;
  std::size_t blocks_per_module = 2;
  std::size_t kernel = 3;
  std::size_t in_channels = 1;
  double dropout_rate = 0.5;

  void validate() const;
  std::size_t width(std::size_t level) const { return base_width << level; }
};

enum class ParamKind { Weight, Bias, Scale, Shift, RunningMean, RunningVar };

constexpr bool is_buffer(ParamKind k) { return k == ParamKind::RunningMean || k == ParamKind::RunningVar; }

struct ParameterRef {
  std::string name;
  Tensor* value;
  bool l1_penalized;
};

struct ConstParameterRef {
  std::string name;
  const Tensor* value;
  bool l1_penalized;
};

struct ResidualCache {
  std::vector<BatchNormCache> bn;
  std::vector<ConvCache> conv;
  ConvCache projection;
};

/// Everything the backward pass needs from one training forward pass.
struct ForwardCache {
  std::vector<ResidualCache> encoder;
  std::vector<ConvCache> downsample;
  ResidualCache bottleneck;
  DropoutCache bottleneck_dropout;
  std::vector<ConvCache> upsample;
  std::vector<ResidualCache> decoder;
  ConvCache head;
  Tensor output;
  bool filled = false;
};

/// U-Net style encoder-decoder producing a one-channel heat map.
///
/// Encoder level l: residual sub-module to width base*2^l, then a stride-2
/// 3x3 convolution. Bottleneck: residual sub-module to base*2^depth followed
/// by spatial dropout. Decoder level l (deepest first): nearest x2
/// upsampling, 3x3 convolution to base*2^l, concatenation with the encoder
/// output of level l, residual sub-module back to base*2^l. Head: 1x1
/// convolution and a logistic.
class SegModel {
 public:
  SegModel() = default;

  /// He-normal convolution weights drawn from `seed`; zero biases; identity
  /// batch norms.
  static SegModel create(const ModelConfig& cfg, std::uint64_t seed);
  /// Same structure, every tensor zero (including running statistics).
  static SegModel zeros(const ModelConfig& cfg);

  const ModelConfig& config() const { return config_; }

  /// Training forward pass on N x C x H x W. Updates batch-norm running
  /// statistics; fills `cache` when given.
  Tensor forward(const Tensor& batch, Mode mode, Rng* rng, ForwardCache* cache = nullptr);
  /// Inference on N x C x H x W using running statistics; no mutation.
  Tensor infer(const Tensor& batch) const;

  /// Trainable tensors, in a fixed order shared by all models of one config.
  std::vector<ParameterRef> parameters();
  std::vector<ConstParameterRef> parameters() const;
  /// Parameters followed by running statistics, the checkpoint contents.
  std::vector<ParameterRef> state();
  std::vector<ConstParameterRef> state() const;

  std::vector<EncoderLevel> encoder;
  ResidualSubModule bottleneck;
  std::vector<DecoderLevel> decoder;  // deepest level first
  ConvLayer head;

 private:
  template <class Self, class F>
  static void visit(Self& self, F&& f);

  ModelConfig config_;
};

/// Throws ShapeError unless H and W are positive multiples of 2^depth.
void check_input_size(const ModelConfig& cfg, std::size_t height, std::size_t width);

/// Heat map (H x W, values in (0, 1)) for a single H x W or 1 x H x W image.
Tensor model_forward(const SegModel& model, const Tensor& image);

/// Gradients w.r.t. every parameter, aligned with model.parameters(), given
/// d(loss)/d(heat map). Projection weights also receive lambda_l1 * sign(w).
std::vector<Tensor> model_backward(const SegModel& model, const Tensor& grad_heatmap,
                                   const ForwardCache& cache, double lambda_l1);

/// lambda_l1 times the summed absolute value of every projection weight.
double l1_penalty(const SegModel& model, double lambda_l1);

/// out = BAC stack(x) + shortcut(x). Exposed for tests.
Tensor residual_forward(const Tensor& input, ResidualSubModule& module, Mode mode,
                        ResidualCache* cache = nullptr);
Tensor residual_forward(const Tensor& input, const ResidualSubModule& module);

}  // namespace ttaseg
