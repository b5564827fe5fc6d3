#include "ttaseg/inference.hpp"

#include <algorithm>
#include <cmath>

#include "ttaseg/error.hpp"
#include "ttaseg/parallel.hpp"

namespace ttaseg {

void McConfig::validate() const {
  if (samples < 1) throw ArgumentError("Monte Carlo sample count must be >= 1");
  transform.validate();
}

void ThresholdConfig::validate() const {
  if (!(baseline > 0.0 && baseline < 1.0)) throw ArgumentError("baseline B must lie in (0, 1)");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ArgumentError("gamma must be finite and >= 0");
}

McStack mc_predict(const HeatMapPredictor& predictor, const Tensor& image, const McConfig& cfg) {
  cfg.validate();
  if (image.rank() != 2) throw ShapeError("mc_predict expects an H x W image");
  const std::size_t k_total = cfg.samples;
  const std::size_t h = image.dim(0);
  const std::size_t w = image.dim(1);
  const std::size_t plane = h * w;

  McStack out{Tensor({k_total, h, w}), std::vector<std::uint8_t>(k_total * plane, 0),
              std::vector<AffineTransform>(k_total)};
  for (std::size_t k = 0; k < k_total; ++k) {
    if (k == 0 && cfg.include_identity) {
      out.transforms[k] = identity_transform();
    } else {
      Rng rng = derive_stream(cfg.seed, k);
      out.transforms[k] = sample_transform(rng, cfg.transform);
    }
  }
  parallel_for(k_total, [&](std::size_t k) {
    const AffineTransform& a = out.transforms[k];
    const Tensor heat = predictor.predict(warp(image, a).image);
    if (heat.shape() != image.shape()) throw ShapeError("predictor returned a heat map of the wrong shape");
    const WarpResult back = warp(heat, invert(a));
    std::copy(back.image.data().begin(), back.image.data().end(), out.heat.raw() + k * plane);
    std::copy(back.validity.begin(), back.validity.end(), out.validity.begin() + static_cast<std::ptrdiff_t>(k * plane));
  });
  return out;
}

McStack mc_predict(const SegModel& model, const Tensor& image, const McConfig& cfg) {
  return mc_predict(ModelPredictor(model), image, cfg);
}

PixelStats aggregate(const Tensor& stack, std::span<const std::uint8_t> validity) {
  if (stack.rank() != 3) throw ShapeError("aggregate expects a K x H x W stack");
  const std::size_t k_total = stack.dim(0);
  if (k_total == 0) throw ArgumentError("aggregate: empty stack");
  const std::size_t h = stack.dim(1);
  const std::size_t w = stack.dim(2);
  const std::size_t plane = h * w;
  if (validity.size() != stack.size()) throw ShapeError("aggregate: validity stack does not match heat-map stack");

  PixelStats stats{Tensor({h, w}), Tensor({h, w}), std::vector<std::size_t>(plane, 0)};
  std::vector<double> values;
  values.reserve(k_total);
  for (std::size_t i = 0; i < plane; ++i) {
    values.clear();
    for (std::size_t k = 0; k < k_total; ++k) {
      if (validity[k * plane + i]) values.push_back(stack[k * plane + i]);
    }
    const std::size_t v = values.size();
    stats.valid_count[i] = v;
    if (v == 0) continue;
    double sum = 0.0;
    for (double x : values) sum += x;
    const double mean = sum / static_cast<double>(v);
    double ss = 0.0;
    for (double x : values) ss += (x - mean) * (x - mean);
    stats.sigma[i] = std::sqrt(ss / static_cast<double>(v));
    std::sort(values.begin(), values.end());
    stats.median[i] = v % 2 ? values[v / 2] : (values[v / 2 - 1] + values[v / 2]) / 2.0;
  }
  return stats;
}

Tensor adaptive_threshold(const PixelStats& stats, const ThresholdConfig& cfg) {
  cfg.validate();
  Tensor d(stats.sigma.shape());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = cfg.baseline + cfg.gamma * stats.sigma[i];
  return d;
}

SegmentationResult segment(const PixelStats& stats, const Tensor& threshold) {
  if (threshold.shape() != stats.median.shape()) throw ShapeError("segment: threshold map shape mismatch");
  SegmentationResult r{Tensor(stats.median.shape()), stats.median, stats.sigma, threshold};
  for (std::size_t i = 0; i < r.mask.size(); ++i) r.mask[i] = stats.median[i] > threshold[i] ? 1.0 : 0.0;
  return r;
}

SegmentationResult run_pipeline(const HeatMapPredictor& predictor, const Tensor& image, const McConfig& mc,
                                const ThresholdConfig& th) {
  th.validate();
  const McStack stack = mc_predict(predictor, image, mc);
  const PixelStats stats = aggregate(stack.heat, stack.validity);
  return segment(stats, adaptive_threshold(stats, th));
}

SegmentationResult run_pipeline(const SegModel& model, const Tensor& image, const McConfig& mc,
                                const ThresholdConfig& th) {
  return run_pipeline(ModelPredictor(model), image, mc, th);
}

Tensor fixed_threshold(const Tensor& map, double level) {
  Tensor mask(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) mask[i] = map[i] > level ? 1.0 : 0.0;
  return mask;
}

}  // namespace ttaseg
