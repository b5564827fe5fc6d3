#pragma once

#include <filesystem>
#include <vector>

#include "ttaseg/inference.hpp"
#include "ttaseg/phantom.hpp"

namespace ttaseg {

struct ImageScore {
  int subject_id = 0;
  int slice_id = 0;
  double plain_dice = 0.0;     // predictor output thresholded at B
  double adaptive_dice = 0.0;  // Monte Carlo median against B + gamma * sigma
  double sigma_band = 0.0;     // mean sigma inside the boundary band
  double sigma_rest = 0.0;     // mean sigma elsewhere
};

struct EvaluationReport {
  std::vector<ImageScore> images;
  double mean_plain_dice = 0.0;
  double mean_adaptive_dice = 0.0;
  // Pixel-pooled over the whole set, not averaged per image.
  double sigma_band = 0.0;
  double sigma_rest = 0.0;
};

/// Pixels within `radius` (Chebyshev) of a pixel whose 4-neighbourhood
/// crosses the mask edge. Both sides of the contour are covered, so
/// radius 1 gives a band about two pixels deep on either side.
std::vector<std::uint8_t> boundary_band(const Tensor& mask, std::size_t radius = 1);

/// Every image gets the same Monte Carlo seed.
EvaluationReport evaluate(const HeatMapPredictor& predictor, const Dataset& data, const McConfig& mc,
                          const ThresholdConfig& th);
EvaluationReport evaluate(const SegModel& model, const Dataset& data, const McConfig& mc, const ThresholdConfig& th);

/// "subject_id,slice_id,plain_dice,adaptive_dice,sigma_band,sigma_rest",
/// one row per image, then a "mean" row.
void write_metrics_csv(const std::filesystem::path& path, const EvaluationReport& report);

}  // namespace ttaseg
