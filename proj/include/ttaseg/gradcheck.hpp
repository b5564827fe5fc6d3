#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ttaseg {

struct GradcheckConfig {
  std::uint64_t seed = 1;
  std::size_t depth = 2;
  std::size_t base_width = 4;
  std::size_t image_size = 16;
  std::size_t batch = 2;
  double lambda_l1 = 1e-3;  // larger than the training default so the L1 term is visible
  double step = 1e-6;       // central difference h
  double rel_tol = 1e-4;
  double abs_tol = 1e-8;
  double min_pass_fraction = 0.99;
  /// A layer is reported broken when fewer than this share of its entries
  /// match. Kept loose because tiny layers can lose a single entry to
  /// round-off near the probability clip.
  double layer_pass_fraction = 0.5;
  /// Test hook: negate the analytic gradient of this layer before comparing.
  std::string fault_layer;

  void validate() const;
};

struct LayerCheck {
  std::string layer;  // parameter name without the trailing component
  std::size_t count = 0;
  std::size_t passed = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;

  double pass_fraction() const { return count ? static_cast<double>(passed) / static_cast<double>(count) : 1.0; }
};

struct GradcheckReport {
  std::vector<LayerCheck> layers;
  std::size_t count = 0;
  std::size_t passed = 0;
  double loss = 0.0;
  double min_pass_fraction = 0.99;
  double layer_pass_fraction = 0.5;

  double pass_fraction() const { return count ? static_cast<double>(passed) / static_cast<double>(count) : 1.0; }
  /// Layers below the per-layer pass fraction.
  std::vector<std::string> failed_layers() const;
  /// Overall fraction reached and no layer broken.
  bool ok() const;
};

/// Compares model_backward on a toy model against central finite differences
/// of the batch loss (mean combined loss plus L1) for every parameter. The
/// dropout mask is held fixed by reseeding its generator for each evaluation.
GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

void print_gradcheck_report(std::ostream& os, const GradcheckReport& report);

}  // namespace ttaseg
