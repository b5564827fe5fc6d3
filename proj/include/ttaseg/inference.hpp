#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ttaseg/geometry.hpp"
#include "ttaseg/model.hpp"

namespace ttaseg {

/// Anything that maps an H x W image to an H x W heat map. Implementations
/// must be safe to call concurrently.
class HeatMapPredictor {
 public:
  virtual ~HeatMapPredictor() = default;
  virtual Tensor predict(const Tensor& image) const = 0;
};

class ModelPredictor final : public HeatMapPredictor {
 public:
  explicit ModelPredictor(const SegModel& model) : model_(model) {}
  Tensor predict(const Tensor& image) const override { return model_forward(model_, image); }

 private:
  const SegModel& model_;
};

struct McConfig {
  std::size_t samples = 16;  // K
  TransformConfig transform;
  std::uint64_t seed = 0;
  bool include_identity = true;  // sample 0 is the untransformed image

  void validate() const;
};

/// Monte Carlo stack, already mapped back into the input frame.
struct McStack {
  Tensor heat;                         // K x H x W
  std::vector<std::uint8_t> validity;  // K*H*W
  std::vector<AffineTransform> transforms;
};

/// For each sample k: transform from derive_stream(seed, k), warp the image,
/// predict, warp the heat map back with the stored inverse. The result does
/// not depend on thread count or execution order.
McStack mc_predict(const HeatMapPredictor& predictor, const Tensor& image, const McConfig& cfg);
McStack mc_predict(const SegModel& model, const Tensor& image, const McConfig& cfg);

struct PixelStats {
  Tensor median;                        // H x W
  Tensor sigma;                         // H x W, population standard deviation
  std::vector<std::size_t> valid_count;  // H*W

  /// True where no sample was valid (median and sigma fall back to 0).
  bool unobserved(std::size_t pixel) const { return valid_count[pixel] == 0; }
};

/// Per-pixel median (mean of the middle pair for even counts) and population
/// standard deviation over the valid samples only.
PixelStats aggregate(const Tensor& stack, std::span<const std::uint8_t> validity);

struct ThresholdConfig {
  double baseline = 0.5;  // B
  double gamma = 0.1;

  void validate() const;
};

/// D = B + gamma * sigma, per pixel.
Tensor adaptive_threshold(const PixelStats& stats, const ThresholdConfig& cfg);

struct SegmentationResult {
  Tensor mask;       // 1 where median > threshold
  Tensor median;
  Tensor sigma;
  Tensor threshold;
};

SegmentationResult segment(const PixelStats& stats, const Tensor& threshold);

/// mc_predict -> aggregate -> adaptive_threshold -> segment.
SegmentationResult run_pipeline(const HeatMapPredictor& predictor, const Tensor& image, const McConfig& mc,
                                const ThresholdConfig& th);
SegmentationResult run_pipeline(const SegModel& model, const Tensor& image, const McConfig& mc,
                                const ThresholdConfig& th);

/// 1 where map > level (strict), else 0.
Tensor fixed_threshold(const Tensor& map, double level);

}  // namespace ttaseg
