#include "ttaseg/evaluation.hpp"

#include <cstdio>
#include <string>

#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/objective.hpp"

namespace ttaseg {

std::vector<std::uint8_t> boundary_band(const Tensor& mask, std::size_t radius) {
  if (mask.rank() != 2) throw ShapeError("boundary_band: mask must be H x W");
  const std::size_t h = mask.dim(0);
  const std::size_t w = mask.dim(1);
  std::vector<std::uint8_t> edge(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = mask[y * w + x];
      const bool differs = (x > 0 && mask[y * w + x - 1] != v) || (x + 1 < w && mask[y * w + x + 1] != v) ||
                           (y > 0 && mask[(y - 1) * w + x] != v) || (y + 1 < h && mask[(y + 1) * w + x] != v);
      edge[y * w + x] = differs ? 1 : 0;
    }
  }
  std::vector<std::uint8_t> band(h * w, 0);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!edge[y * w + x]) continue;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          band[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] = 1;
        }
      }
    }
  }
  return band;
}

EvaluationReport evaluate(const HeatMapPredictor& predictor, const Dataset& data, const McConfig& mc,
                          const ThresholdConfig& th) {
  mc.validate();
  th.validate();
  EvaluationReport report;
  double band_sum = 0.0, rest_sum = 0.0;
  std::size_t band_n = 0, rest_n = 0;
  for (const Phantom& p : data) {
    ImageScore s;
    s.subject_id = p.subject_id;
    s.slice_id = p.slice_id;
    s.plain_dice = hard_dice(fixed_threshold(predictor.predict(p.image), th.baseline), p.mask);
    const SegmentationResult res = run_pipeline(predictor, p.image, mc, th);
    s.adaptive_dice = hard_dice(res.mask, p.mask);

    const auto band = boundary_band(p.mask);
    double b = 0.0, o = 0.0;
    std::size_t nb = 0, no = 0;
    for (std::size_t i = 0; i < band.size(); ++i) {
      if (band[i]) {
        b += res.sigma[i];
        ++nb;
      } else {
        o += res.sigma[i];
        ++no;
      }
    }
    s.sigma_band = nb ? b / static_cast<double>(nb) : 0.0;
    s.sigma_rest = no ? o / static_cast<double>(no) : 0.0;
    band_sum += b;
    rest_sum += o;
    band_n += nb;
    rest_n += no;
    report.mean_plain_dice += s.plain_dice;
    report.mean_adaptive_dice += s.adaptive_dice;
    report.images.push_back(s);
  }
  if (!data.empty()) {
    report.mean_plain_dice /= static_cast<double>(data.size());
    report.mean_adaptive_dice /= static_cast<double>(data.size());
  }
  report.sigma_band = band_n ? band_sum / static_cast<double>(band_n) : 0.0;
  report.sigma_rest = rest_n ? rest_sum / static_cast<double>(rest_n) : 0.0;
  return report;
}

EvaluationReport evaluate(const SegModel& model, const Dataset& data, const McConfig& mc, const ThresholdConfig& th) {
  return evaluate(ModelPredictor(model), data, mc, th);
}

void write_metrics_csv(const std::filesystem::path& path, const EvaluationReport& report) {
  std::string out = "subject_id,slice_id,plain_dice,adaptive_dice,sigma_band,sigma_rest\n";
  char buf[256];
  for (const ImageScore& s : report.images) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g\n", s.subject_id, s.slice_id, s.plain_dice,
                  s.adaptive_dice, s.sigma_band, s.sigma_rest);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean,,%.17g,%.17g,%.17g,%.17g\n", report.mean_plain_dice, report.mean_adaptive_dice,
                report.sigma_band, report.sigma_rest);
  out += buf;
  write_file_bytes(path, out);
}

}  // namespace ttaseg
