#include "ttaseg/model.hpp"

#include <cmath>
#include <type_traits>

#include "ttaseg/error.hpp"

namespace ttaseg {

void ModelConfig::validate() const {
  if (depth < 1 || depth > 6) throw ArgumentError("model depth must lie in [1, 6]");
  if (base_width < 1) throw ArgumentError("model base width must be positive");
  if (blocks_per_module < 1) throw ArgumentError("residual sub-modules need at least one BAC block");
  if (kernel % 2 == 0) throw ArgumentError("kernel size must be odd");
  if (in_channels < 1) throw ArgumentError("input channels must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
}

void check_input_size(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  const std::size_t factor = std::size_t{1} << cfg.depth;
  if (height == 0 || width == 0 || height % factor || width % factor) {
    throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^depth = " + std::to_string(factor));
  }
}

namespace {

ResidualSubModule make_residual(std::size_t in, std::size_t out, const ModelConfig& cfg) {
  ResidualSubModule m;
  for (std::size_t b = 0; b < cfg.blocks_per_module; ++b) {
    const std::size_t block_in = b == 0 ? in : out;
    m.blocks.push_back({BatchNormLayer::identity(block_in), ConvLayer::zeros(block_in, out, cfg.kernel)});
  }
  if (in != out) m.projection = ConvLayer::zeros(in, out, 1);
  return m;
}

void he_init(ConvLayer& conv, Rng& rng, double gain) {
  const double fan_in = static_cast<double>(conv.in_channels() * conv.kernel() * conv.kernel());
  const double stddev = std::sqrt(gain / fan_in);
  for (double& w : conv.weight.data()) w = stddev * rng.normal();
  conv.bias.fill(0.0);
}

}  // namespace

SegModel SegModel::zeros(const ModelConfig& cfg) {
  cfg.validate();
  SegModel m;
  m.config_ = cfg;
  std::size_t channels = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::size_t w = cfg.width(l);
    m.encoder.push_back({make_residual(channels, w, cfg), ConvLayer::zeros(w, w, cfg.kernel, 2)});
    channels = w;
  }
  const std::size_t mid = cfg.width(cfg.depth);
  m.bottleneck = make_residual(channels, mid, cfg);
  channels = mid;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t level = cfg.depth - 1 - i;
    const std::size_t w = cfg.width(level);
    m.decoder.push_back({ConvLayer::zeros(channels, w, cfg.kernel), make_residual(2 * w, w, cfg)});
    channels = w;
  }
  m.head = ConvLayer::zeros(channels, 1, 1);
  for (auto ref : m.state()) ref.value->fill(0.0);
  return m;
}

SegModel SegModel::create(const ModelConfig& cfg, std::uint64_t seed) {
  SegModel m = zeros(cfg);
  Rng rng(mix_seed(seed, 0x1A17));
  auto init_residual = [&](ResidualSubModule& r) {
    for (auto& b : r.blocks) {
      b.bn = BatchNormLayer::identity(b.bn.channels());
      he_init(b.conv, rng, 2.0);
    }
    if (r.projection) he_init(*r.projection, rng, 1.0);
  };
  for (auto& e : m.encoder) {
    init_residual(e.block);
    he_init(e.downsample, rng, 2.0);
  }
  init_residual(m.bottleneck);
  for (auto& d : m.decoder) {
    he_init(d.upsample, rng, 2.0);
    init_residual(d.block);
  }
  he_init(m.head, rng, 1.0);
  return m;
}

template <class Self, class F>
void SegModel::visit(Self& self, F&& f) {
  auto conv = [&](const std::string& prefix, auto& c, bool l1) {
    f(prefix + ".weight", c.weight, ParamKind::Weight, l1);
    f(prefix + ".bias", c.bias, ParamKind::Bias, false);
  };
  auto residual = [&](const std::string& prefix, auto& r) {
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      const std::string p = prefix + ".bac" + std::to_string(b);
      f(p + ".bn.scale", r.blocks[b].bn.scale, ParamKind::Scale, false);
      f(p + ".bn.shift", r.blocks[b].bn.shift, ParamKind::Shift, false);
      f(p + ".bn.running_mean", r.blocks[b].bn.running_mean, ParamKind::RunningMean, false);
      f(p + ".bn.running_var", r.blocks[b].bn.running_var, ParamKind::RunningVar, false);
      conv(p + ".conv", r.blocks[b].conv, false);
    }
    if (r.projection) conv(prefix + ".proj", *r.projection, true);
  };
  for (std::size_t l = 0; l < self.encoder.size(); ++l) {
    const std::string p = "enc" + std::to_string(l);
    residual(p + ".block", self.encoder[l].block);
    conv(p + ".down", self.encoder[l].downsample, false);
  }
  residual("mid.block", self.bottleneck);
  for (std::size_t i = 0; i < self.decoder.size(); ++i) {
    const std::string p = "dec" + std::to_string(self.decoder.size() - 1 - i);
    conv(p + ".up", self.decoder[i].upsample, false);
    residual(p + ".block", self.decoder[i].block);
  }
  conv("head", self.head, false);
}

std::vector<ParameterRef> SegModel::parameters() {
  std::vector<ParameterRef> out;
  visit(*this, [&](const std::string& name, Tensor& t, ParamKind kind, bool l1) {
    if (!is_buffer(kind)) out.push_back({name, &t, l1});
  });
  return out;
}

std::vector<ConstParameterRef> SegModel::parameters() const {
  std::vector<ConstParameterRef> out;
  visit(*this, [&](const std::string& name, const Tensor& t, ParamKind kind, bool l1) {
    if (!is_buffer(kind)) out.push_back({name, &t, l1});
  });
  return out;
}

std::vector<ParameterRef> SegModel::state() {
  std::vector<ParameterRef> params;
  std::vector<ParameterRef> buffers;
  visit(*this, [&](const std::string& name, Tensor& t, ParamKind kind, bool l1) {
    (is_buffer(kind) ? buffers : params).push_back({name, &t, l1});
  });
  params.insert(params.end(), buffers.begin(), buffers.end());
  return params;
}

std::vector<ConstParameterRef> SegModel::state() const {
  std::vector<ConstParameterRef> out;
  for (const auto& ref : const_cast<SegModel*>(this)->state()) out.push_back({ref.name, ref.value, ref.l1_penalized});
  return out;
}

namespace {

// Shared by the training (mutable model) and inference (const model) paths.
Tensor bn_forward(const Tensor& x, BatchNormLayer& layer, Mode mode, BatchNormCache* cache) {
  return batch_norm(x, layer, mode, cache);
}

Tensor bn_forward(const Tensor& x, const BatchNormLayer& layer, Mode mode, BatchNormCache* cache) {
  if (mode != Mode::Infer || cache) throw StateError("read-only models only support cache-free inference");
  return batch_norm(x, layer);
}

template <class Module>
Tensor residual_impl(const Tensor& input, Module& module, Mode mode, ResidualCache* cache) {
  if (input.rank() != 4 || input.dim(1) != module.in_channels()) {
    throw ShapeError("residual sub-module expects " + std::to_string(module.in_channels()) + " input channels");
  }
  if (cache) {
    cache->bn.assign(module.blocks.size(), {});
    cache->conv.assign(module.blocks.size(), {});
  }
  Tensor x = input;
  for (std::size_t b = 0; b < module.blocks.size(); ++b) {
    auto& block = module.blocks[b];
    x = relu(bn_forward(x, block.bn, mode, cache ? &cache->bn[b] : nullptr));
    x = conv2d(x, block.conv, cache ? &cache->conv[b] : nullptr);
  }
  if (module.projection) {
    add_inplace(x, conv2d(input, *module.projection, cache ? &cache->projection : nullptr));
  } else {
    add_inplace(x, input);
  }
  return x;
}

template <class Model>
Tensor forward_impl(Model& m, const Tensor& batch, Mode mode, Rng* rng, ForwardCache* cache) {
  const ModelConfig& cfg = m.config();
  if (batch.rank() != 4 || batch.dim(1) != cfg.in_channels) {
    throw ShapeError("model expects N x " + std::to_string(cfg.in_channels) + " x H x W input, got " +
                     shape_to_string(batch.shape()));
  }
  check_input_size(cfg, batch.dim(2), batch.dim(3));
  const std::size_t depth = cfg.depth;
  if (cache) {
    *cache = ForwardCache{};
    cache->encoder.resize(depth);
    cache->downsample.resize(depth);
    cache->upsample.resize(depth);
    cache->decoder.resize(depth);
  }

  std::vector<Tensor> skips(depth);
  Tensor x = batch;
  for (std::size_t l = 0; l < depth; ++l) {
    x = residual_impl(x, m.encoder[l].block, mode, cache ? &cache->encoder[l] : nullptr);
    skips[l] = x;
    x = conv2d(x, m.encoder[l].downsample, cache ? &cache->downsample[l] : nullptr);
  }
  x = residual_impl(x, m.bottleneck, mode, cache ? &cache->bottleneck : nullptr);
  x = spatial_dropout(x, cfg.dropout_rate, rng, mode, cache ? &cache->bottleneck_dropout : nullptr);
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t level = depth - 1 - i;
    x = conv2d(upsample_nearest2x(x), m.decoder[i].upsample, cache ? &cache->upsample[i] : nullptr);
    x = concat_channels(x, skips[level]);
    x = residual_impl(x, m.decoder[i].block, mode, cache ? &cache->decoder[i] : nullptr);
  }
  Tensor out = sigmoid(conv2d(x, m.head, cache ? &cache->head : nullptr));
  if (cache) {
    cache->output = out;
    cache->filled = true;
  }
  return out;
}

void accumulate_conv(ConvLayer& into, const ConvGradients& g) {
  add_inplace(into.weight, g.weight);
  add_inplace(into.bias, g.bias);
}

Tensor residual_backward(const Tensor& grad_out, const ResidualSubModule& module, const ResidualCache& cache,
                         ResidualSubModule& grads) {
  if (cache.conv.size() != module.blocks.size()) throw StateError("residual backward: missing cache");
  Tensor g = grad_out;
  for (std::size_t b = module.blocks.size(); b-- > 0;) {
    const auto& block = module.blocks[b];
    ConvGradients cg = conv2d_backward(g, cache.conv[b], block.conv);
    accumulate_conv(grads.blocks[b].conv, cg);
    g = relu_backward(cg.input, cache.conv[b].input);
    BatchNormGradients bg = batch_norm_backward(g, cache.bn[b], block.bn);
    add_inplace(grads.blocks[b].bn.scale, bg.scale);
    add_inplace(grads.blocks[b].bn.shift, bg.shift);
    g = std::move(bg.input);
  }
  if (module.projection) {
    ConvGradients pg = conv2d_backward(grad_out, cache.projection, *module.projection);
    accumulate_conv(*grads.projection, pg);
    add_inplace(g, pg.input);
  } else {
    add_inplace(g, grad_out);
  }
  return g;
}

}  // namespace

Tensor residual_forward(const Tensor& input, ResidualSubModule& module, Mode mode, ResidualCache* cache) {
  return residual_impl(input, module, mode, cache);
}

Tensor residual_forward(const Tensor& input, const ResidualSubModule& module) {
  return residual_impl(input, module, Mode::Infer, nullptr);
}

Tensor SegModel::forward(const Tensor& batch, Mode mode, Rng* rng, ForwardCache* cache) {
  return forward_impl(*this, batch, mode, rng, cache);
}

Tensor SegModel::infer(const Tensor& batch) const { return forward_impl(*this, batch, Mode::Infer, nullptr, nullptr); }

Tensor model_forward(const SegModel& model, const Tensor& image) {
  Tensor batch;
  if (image.rank() == 2) {
    batch = image.reshaped({1, 1, image.dim(0), image.dim(1)});
  } else if (image.rank() == 3 && image.dim(0) == 1) {
    batch = image.reshaped({1, 1, image.dim(1), image.dim(2)});
  } else {
    throw ShapeError("model_forward expects an H x W or 1 x H x W image, got " + shape_to_string(image.shape()));
  }
  Tensor out = model.infer(batch);
  out.reshape({batch.dim(2), batch.dim(3)});
  return out;
}

std::vector<Tensor> model_backward(const SegModel& model, const Tensor& grad_heatmap, const ForwardCache& cache,
                                   double lambda_l1) {
  if (!cache.filled) throw StateError("model_backward: no cached forward pass");
  if (grad_heatmap.size() != cache.output.size()) {
    throw ShapeError("model_backward: gradient " + shape_to_string(grad_heatmap.shape()) +
                     " does not match output " + shape_to_string(cache.output.shape()));
  }
  const ModelConfig& cfg = model.config();
  const std::size_t depth = cfg.depth;
  SegModel grads = SegModel::zeros(cfg);

  Tensor g = sigmoid_backward(grad_heatmap.reshaped(cache.output.shape()), cache.output);
  ConvGradients hg = conv2d_backward(g, cache.head, model.head);
  accumulate_conv(grads.head, hg);
  g = std::move(hg.input);

  std::vector<Tensor> skip_grads(depth);
  for (std::size_t i = depth; i-- > 0;) {
    const std::size_t level = depth - 1 - i;
    g = residual_backward(g, model.decoder[i].block, cache.decoder[i], grads.decoder[i].block);
    auto [g_up, g_skip] = split_channels(g, model.decoder[i].upsample.out_channels());
    skip_grads[level] = std::move(g_skip);
    ConvGradients ug = conv2d_backward(g_up, cache.upsample[i], model.decoder[i].upsample);
    accumulate_conv(grads.decoder[i].upsample, ug);
    g = upsample_nearest2x_backward(ug.input);
  }
  g = spatial_dropout_backward(g, cache.bottleneck_dropout);
  g = residual_backward(g, model.bottleneck, cache.bottleneck, grads.bottleneck);
  for (std::size_t l = depth; l-- > 0;) {
    ConvGradients dg = conv2d_backward(g, cache.downsample[l], model.encoder[l].downsample);
    accumulate_conv(grads.encoder[l].downsample, dg);
    g = std::move(dg.input);
    add_inplace(g, skip_grads[l]);
    g = residual_backward(g, model.encoder[l].block, cache.encoder[l], grads.encoder[l].block);
  }

  std::vector<Tensor> out;
  const auto values = model.parameters();
  const auto refs = grads.parameters();
  out.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Tensor t = std::move(*refs[i].value);
    if (refs[i].l1_penalized && lambda_l1 != 0.0) {
      const Tensor& w = *values[i].value;
      for (std::size_t j = 0; j < t.size(); ++j) {
        const double sign = w[j] > 0.0 ? 1.0 : (w[j] < 0.0 ? -1.0 : 0.0);
        t[j] += lambda_l1 * sign;
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

double l1_penalty(const SegModel& model, double lambda_l1) {
  double s = 0.0;
  for (const auto& ref : model.parameters()) {
    if (!ref.l1_penalized) continue;
    for (double w : ref.value->data()) s += std::abs(w);
  }
  return lambda_l1 * s;
}

}  // namespace ttaseg
