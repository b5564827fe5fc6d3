#include "ttaseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "ttaseg/error.hpp"
#include "ttaseg/model.hpp"
#include "ttaseg/objective.hpp"
#include "ttaseg/phantom.hpp"
#include "ttaseg/rng.hpp"

namespace ttaseg {
namespace {

constexpr std::uint64_t kDataTag = 0x6C4EC;
constexpr std::uint64_t kDropTag = 0xD2;

std::string layer_of(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

struct Problem {
  Tensor batch;
  std::vector<Tensor> masks;
  std::size_t plane = 0;
};

Problem make_problem(const GradcheckConfig& cfg) {
  PhantomConfig pc;
  pc.size = cfg.image_size;
  const double half = static_cast<double>(cfg.image_size) / 2.0;
  pc.pool_radius_min = half * 0.25;
  pc.pool_radius_max = half * 0.4;
  pc.wall_min = half * 0.1;
  pc.wall_max = half * 0.2;
  pc.center_jitter = half * 0.2;
  Problem p;
  p.plane = cfg.image_size * cfg.image_size;
  p.batch = Tensor({cfg.batch, 1, cfg.image_size, cfg.image_size});
  const std::uint64_t data_seed = mix_seed(cfg.seed, kDataTag);
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    Phantom ph = generate_phantom(data_seed, pc, static_cast<int>(i), 0);
    std::copy(ph.image.data().begin(), ph.image.data().end(), p.batch.raw() + i * p.plane);
    p.masks.push_back(std::move(ph.mask));
  }
  return p;
}

// Train-mode loss. Running statistics move on every call but never feed
// back into a train-mode output, so repeated evaluations agree.
double batch_loss(SegModel& model, const Problem& p, const GradcheckConfig& cfg, Tensor* grad,
                  ForwardCache* cache) {
  Rng drop = derive_stream(mix_seed(cfg.seed, kDropTag), 0);
  const Tensor out = model.forward(p.batch, Mode::Train, &drop, cache);
  const std::size_t n = p.masks.size();
  const Shape image_shape{cfg.image_size, cfg.image_size};
  double total = 0.0;
  if (grad) *grad = Tensor(out.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Tensor pred(image_shape, std::vector<double>(out.raw() + i * p.plane, out.raw() + (i + 1) * p.plane));
    total += combined_loss(p.masks[i], pred).combined;
    if (grad) {
      const Tensor g = loss_gradient(p.masks[i], pred);
      for (std::size_t j = 0; j < p.plane; ++j) (*grad)[i * p.plane + j] = g[j] / static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n) + l1_penalty(model, cfg.lambda_l1);
}

}  // namespace

void GradcheckConfig::validate() const {
  if (depth < 1 || base_width < 1 || batch < 1) throw ArgumentError("gradcheck: depth, width and batch must be positive");
  if (image_size == 0 || image_size % (std::size_t{1} << depth) != 0) {
    throw ArgumentError("gradcheck: image size must be a multiple of 2^depth");
  }
  if (image_size < 8) throw ArgumentError("gradcheck: image size must be at least 8");
  if (!(step > 0.0) || !(rel_tol > 0.0) || !(abs_tol >= 0.0)) throw ArgumentError("gradcheck: bad tolerances");
  if (!(min_pass_fraction > 0.0 && min_pass_fraction <= 1.0) ||
      !(layer_pass_fraction > 0.0 && layer_pass_fraction <= 1.0)) {
    throw ArgumentError("gradcheck: pass fraction must lie in (0, 1]");
  }
}

std::vector<std::string> GradcheckReport::failed_layers() const {
  std::vector<std::string> out;
  for (const LayerCheck& l : layers) {
    if (l.pass_fraction() < layer_pass_fraction) out.push_back(l.layer);
  }
  return out;
}

bool GradcheckReport::ok() const { return pass_fraction() >= min_pass_fraction && failed_layers().empty(); }

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  cfg.validate();
  ModelConfig mc;
  mc.depth = cfg.depth;
  mc.base_width = cfg.base_width;
  SegModel model = SegModel::create(mc, cfg.seed);
  const Problem problem = make_problem(cfg);

  Tensor grad_out;
  GradcheckReport report;
  report.min_pass_fraction = cfg.min_pass_fraction;
  report.layer_pass_fraction = cfg.layer_pass_fraction;
  ForwardCache cache;
  report.loss = batch_loss(model, problem, cfg, &grad_out, &cache);
  std::vector<Tensor> analytic = model_backward(model, grad_out, cache, cfg.lambda_l1);

  auto params = model.parameters();
  if (!cfg.fault_layer.empty() &&
      std::none_of(params.begin(), params.end(), [&](const ParameterRef& r) { return layer_of(r.name) == cfg.fault_layer; })) {
    throw ArgumentError("gradcheck: no layer named '" + cfg.fault_layer + "'");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::string layer = layer_of(params[p].name);
    if (!index.count(layer)) {
      index[layer] = report.layers.size();
      report.layers.push_back(LayerCheck{layer});
    }
    const bool flip = !cfg.fault_layer.empty() && layer == cfg.fault_layer;
    LayerCheck& lc = report.layers[index[layer]];
    Tensor& value = *params[p].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + cfg.step;
      const double up = batch_loss(model, problem, cfg, nullptr, nullptr);
      value[i] = saved - cfg.step;
      const double down = batch_loss(model, problem, cfg, nullptr, nullptr);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * cfg.step);
      const double a = flip ? -analytic[p][i] : analytic[p][i];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      const bool pass = abs_err <= cfg.abs_tol || rel_err <= cfg.rel_tol;
      ++lc.count;
      ++report.count;
      if (pass) {
        ++lc.passed;
        ++report.passed;
      }
      lc.max_abs_error = std::max(lc.max_abs_error, abs_err);
      if (abs_err > cfg.abs_tol) lc.max_rel_error = std::max(lc.max_rel_error, rel_err);
    }
  }
  return report;
}

void print_gradcheck_report(std::ostream& os, const GradcheckReport& report) {
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %7s %7s %12s %12s\n", "layer", "params", "passed", "max_rel", "max_abs");
  os << line;
  for (const LayerCheck& l : report.layers) {
    std::snprintf(line, sizeof line, "%-28s %7zu %7zu %12.3e %12.3e%s\n", l.layer.c_str(), l.count, l.passed,
                  l.max_rel_error, l.max_abs_error, l.pass_fraction() < report.layer_pass_fraction ? "  FAIL" : "");
    os << line;
  }
  std::snprintf(line, sizeof line, "total %zu/%zu parameters within tolerance (%.4f), loss %.10g\n", report.passed,
                report.count, report.pass_fraction(), report.loss);
  os << line;
  const auto failed = report.failed_layers();
  if (!failed.empty()) {
    os << "failed layers:";
    for (const auto& f : failed) os << ' ' << f;
    os << '\n';
  }
  os << (report.ok() ? "gradcheck passed\n" : "gradcheck FAILED\n");
}

}  // namespace ttaseg
