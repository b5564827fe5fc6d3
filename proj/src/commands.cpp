#include "ttaseg/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "ttaseg/checkpoint.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/evaluation.hpp"
#include "ttaseg/gradcheck.hpp"
#include "ttaseg/inference.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/pgm.hpp"
#include "ttaseg/phantom.hpp"
#include "ttaseg/training.hpp"

namespace fs = std::filesystem;

namespace ttaseg {
namespace {

constexpr std::uint64_t kSplitTag = 0x5B117;

// Resolved settings, echoed to config.txt in key order.
using ConfigEcho = std::map<std::string, std::string>;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_config(const fs::path& dir, const ConfigEcho& cfg) {
  std::string text;
  for (const auto& [k, v] : cfg) text += k + "=" + v + "\n";
  write_file_bytes(dir / "config.txt", text);
}

struct GenDataArgs {
  std::uint64_t seed = 1;
  int subjects = 33;
  int slices = 10;
  PhantomConfig phantom;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig train;
  double dropout = 0.5;
  int holdout = 5;
  std::uint64_t split_seed = 1;
  bool no_augment = false;
};

struct McArgs {
  std::size_t samples = 16;
  double gamma = 0.1;
  double baseline = 0.5;
  double t_range = 20.0;
  double r_range = 20.0;
  std::uint64_t seed = 0;

  McConfig mc() const {
    McConfig c;
    c.samples = samples;
    c.seed = seed;
    c.transform.translation_range = t_range;
    c.transform.rotation_range = r_range;
    return c;
  }
  ThresholdConfig threshold() const { return ThresholdConfig{baseline, gamma}; }
  void echo(ConfigEcho& e) const {
    e["samples"] = std::to_string(samples);
    e["gamma"] = fmt(gamma);
    e["baseline"] = fmt(baseline);
    e["t_range"] = fmt(t_range);
    e["r_range"] = fmt(r_range);
    e["seed"] = std::to_string(seed);
  }
};

struct InferArgs {
  std::string checkpoint;
  std::string data;
  std::string image;
  std::string split;
  std::string out;
  McArgs mc;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split;
  std::string out;
  McArgs mc;
};

struct GradcheckArgs {
  GradcheckConfig cfg;
};

void add_mc_flags(CLI::App* cmd, McArgs& a) {
  cmd->add_option("--samples", a.samples, "Monte Carlo samples K")->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", a.gamma, "Uncertainty weight in the threshold")->check(CLI::NonNegativeNumber);
  cmd->add_option("--baseline", a.baseline, "Baseline threshold B")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--t-range", a.t_range, "Translation range T in pixels")->check(CLI::NonNegativeNumber);
  cmd->add_option("--r-range", a.r_range, "Rotation range R in degrees")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", a.seed, "Seed for the sampled transforms");
}

std::string image_tag(int subject, int slice) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03d_%03d", subject, slice);
  return buf;
}

std::string join_ids(const std::set<int>& ids) {
  std::string s;
  for (int id : ids) s += (s.empty() ? "" : " ") + std::to_string(id);
  return s;
}

// split.txt: "train <ids>" and "test <ids>" lines of subject ids.
std::set<int> read_test_subjects(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read split file " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != "test") continue;
    std::set<int> ids;
    int id = 0;
    while (ls >> id) ids.insert(id);
    return ids;
  }
  throw FormatError("split file has no test line: " + path.string(), 0);
}

Dataset select_subjects(const Dataset& data, const std::set<int>& ids) {
  Dataset out;
  for (const Phantom& p : data) {
    if (ids.count(p.subject_id)) out.push_back(p);
  }
  return out;
}

void cmd_gen_data(GenDataArgs a, std::ostream& out) {
  // Geometry follows the image size; intensities keep the flag values.
  PhantomConfig scaled = scaled_phantom_config(a.phantom.size);
  scaled.noise_sigma = a.phantom.noise_sigma;
  scaled.bias_amplitude = a.phantom.bias_amplitude;
  a.phantom = scaled;
  const Dataset data = generate_dataset(a.seed, a.subjects, a.slices, a.phantom);
  save_dataset(a.out, data);
  write_config(a.out, {{"seed", std::to_string(a.seed)},
                       {"subjects", std::to_string(a.subjects)},
                       {"slices", std::to_string(a.slices)},
                       {"size", std::to_string(a.phantom.size)},
                       {"pool_radius_min", fmt(a.phantom.pool_radius_min)},
                       {"pool_radius_max", fmt(a.phantom.pool_radius_max)},
                       {"wall_min", fmt(a.phantom.wall_min)},
                       {"wall_max", fmt(a.phantom.wall_max)},
                       {"center_jitter", fmt(a.phantom.center_jitter)},
                       {"noise_sigma", fmt(a.phantom.noise_sigma)},
                       {"bias_amplitude", fmt(a.phantom.bias_amplitude)}});
  out << "wrote " << data.size() << " phantoms to " << a.out << "\n";
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  const Dataset data = load_dataset(a.data);
  Rng split_rng(mix_seed(a.split_seed, kSplitTag));
  const auto [train, test] = split_dataset(data, split_rng, a.holdout);

  TrainConfig cfg = a.train;
  cfg.augment.enabled = !a.no_augment;
  ModelConfig mc;
  mc.dropout_rate = a.dropout;
  mc.validate();
  cfg.validate();
  SegModel model = SegModel::create(mc, cfg.seed);

  fs::create_directories(a.out);
  std::set<int> train_ids, test_ids;
  for (const Phantom& p : train) train_ids.insert(p.subject_id);
  for (const Phantom& p : test) test_ids.insert(p.subject_id);
  write_file_bytes(fs::path(a.out) / "split.txt", "train " + join_ids(train_ids) + "\ntest " + join_ids(test_ids) + "\n");
  write_config(a.out, {{"data", a.data},
                       {"epochs", std::to_string(cfg.epochs)},
                       {"learning_rate", fmt(cfg.learning_rate)},
                       {"lambda_l1", fmt(cfg.lambda_l1)},
                       {"dropout", fmt(mc.dropout_rate)},
                       {"batch_size", std::to_string(cfg.batch_size)},
                       {"seed", std::to_string(cfg.seed)},
                       {"split_seed", std::to_string(a.split_seed)},
                       {"holdout", std::to_string(a.holdout)},
                       {"augment", cfg.augment.enabled ? "1" : "0"},
                       {"depth", std::to_string(mc.depth)},
                       {"base_width", std::to_string(mc.base_width)}});

  const TrainLog log = fit(model, train, test, cfg, [&](const EpochRecord& r) {
    if (r.epoch % 10 == 0 || r.epoch == cfg.epochs) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %d  loss %.5f  soft dice %.4f  holdout dice %.4f\n", r.epoch,
                    r.train_loss, r.train_dice, r.val_dice);
      out << buf << std::flush;
    }
  });
  save_checkpoint(fs::path(a.out) / "checkpoint", model);
  write_epoch_csv(fs::path(a.out) / "epochs.csv", log);
  out << "trained on " << train.size() << " images, held out " << test.size() << "\n";
}

void write_image_outputs(const fs::path& dir, const McStack& stack, const SegmentationResult& res) {
  fs::create_directories(dir);
  save_tensor(dir / "mask.ntf", res.mask);
  save_tensor(dir / "median.ntf", res.median);
  save_tensor(dir / "sigma.ntf", res.sigma);
  save_tensor(dir / "threshold.ntf", res.threshold);
  write_pgm(dir / "mask.pgm", res.mask, 1.0);
  write_pgm(dir / "median.pgm", res.median, res.median.max());
  write_pgm(dir / "sigma.pgm", res.sigma, res.sigma.max());
  std::string csv = "sample_index,t_x,t_y,theta\n";
  char buf[160];
  for (std::size_t k = 0; k < stack.transforms.size(); ++k) {
    const AffineTransform& t = stack.transforms[k];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", k, t.tx, t.ty, t.theta);
    csv += buf;
  }
  write_file_bytes(dir / "transforms.csv", csv);
}

void cmd_infer(const InferArgs& a, std::ostream& out) {
  const SegModel model = load_checkpoint(a.checkpoint);
  std::vector<std::pair<std::string, Tensor>> images;
  if (!a.image.empty()) {
    Tensor img = load_tensor(a.image);
    if (img.rank() == 3 && img.dim(0) == 1) img.reshape({img.dim(1), img.dim(2)});
    if (img.rank() != 2) throw ShapeError("--image must hold an H x W tensor, got " + shape_to_string(img.shape()));
    images.emplace_back(fs::path(a.image).stem().string(), std::move(img));
  } else {
    Dataset data = load_dataset(a.data);
    if (!a.split.empty()) data = select_subjects(data, read_test_subjects(a.split));
    for (Phantom& p : data) images.emplace_back(image_tag(p.subject_id, p.slice_id), std::move(p.image));
  }
  for (const auto& [name, img] : images) check_input_size(model.config(), img.dim(0), img.dim(1));

  const McConfig mc = a.mc.mc();
  const ThresholdConfig th = a.mc.threshold();
  mc.validate();
  th.validate();
  fs::create_directories(a.out);
  ConfigEcho echo{{"checkpoint", a.checkpoint}, {"data", a.data}, {"image", a.image}, {"split", a.split}};
  a.mc.echo(echo);
  write_config(a.out, echo);

  const ModelPredictor predictor(model);
  std::string summary = "image,sigma_max,median_max,foreground\n";
  char buf[256];
  for (const auto& [name, img] : images) {
    const McStack stack = mc_predict(predictor, img, mc);
    const PixelStats stats = aggregate(stack.heat, stack.validity);
    const SegmentationResult res = segment(stats, adaptive_threshold(stats, th));
    write_image_outputs(fs::path(a.out) / name, stack, res);
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", name.c_str(), res.sigma.max(), res.median.max(),
                  res.mask.sum());
    summary += buf;
  }
  write_file_bytes(fs::path(a.out) / "summary.csv", summary);
  out << "wrote outputs for " << images.size() << " images to " << a.out << "\n";
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const SegModel model = load_checkpoint(a.checkpoint);
  Dataset data = load_dataset(a.data);
  if (!a.split.empty()) data = select_subjects(data, read_test_subjects(a.split));
  for (const Phantom& p : data) check_input_size(model.config(), p.image.dim(0), p.image.dim(1));
  const EvaluationReport report = evaluate(model, data, a.mc.mc(), a.mc.threshold());
  fs::create_directories(a.out);
  ConfigEcho echo{{"checkpoint", a.checkpoint}, {"data", a.data}, {"split", a.split}};
  a.mc.echo(echo);
  write_config(a.out, echo);
  write_metrics_csv(fs::path(a.out) / "metrics.csv", report);
  char buf[200];
  std::snprintf(buf, sizeof buf, "images %zu  plain dice %.4f  adaptive dice %.4f  sigma band/rest %.4f/%.4f\n",
                report.images.size(), report.mean_plain_dice, report.mean_adaptive_dice, report.sigma_band,
                report.sigma_rest);
  out << buf;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const GradcheckReport report = run_gradcheck(a.cfg);
  print_gradcheck_report(out, report);
  return report.ok() ? kExitOk : kExitRuntime;
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation with Monte Carlo test-time augmentation and uncertainty-aware thresholding", "ttaseg"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--subjects", gen.subjects, "Number of subjects")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--slices", gen.slices, "Slices per subject")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", gen.phantom.size, "Image side length");
  gen_cmd->add_option("--noise", gen.phantom.noise_sigma, "Additive noise sigma");
  gen_cmd->add_option("--bias", gen.phantom.bias_amplitude, "Bias field amplitude");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the network on a dataset");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--epochs", tr.train.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", tr.train.seed, "Initialisation, shuffling, augmentation and dropout seed");
  train_cmd->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--dropout", tr.dropout, "Spatial dropout rate")->check(CLI::Range(0.0, 0.999));
  train_cmd->add_option("--l1", tr.train.lambda_l1, "L1 weight on projection convolutions")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch", tr.train.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--holdout", tr.holdout, "Subjects held out for testing")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--split-seed", tr.split_seed, "Seed for the subject split");
  train_cmd->add_flag("--no-augment", tr.no_augment, "Disable train-time augmentation");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Segment images with uncertainty maps");
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "Checkpoint directory")->required();
  auto* inf_data = infer_cmd->add_option("--data", inf.data, "Dataset directory");
  auto* inf_image = infer_cmd->add_option("--image", inf.image, "Single H x W NTF1 image");
  inf_data->excludes(inf_image);
  infer_cmd->add_option("--split", inf.split, "split.txt; restricts --data to its test subjects")->needs(inf_data);
  infer_cmd->add_option("--out", inf.out, "Output directory")->required();
  add_mc_flags(infer_cmd, inf.mc);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Dice of plain and adaptive-threshold segmentation");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data, "Labelled dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "split.txt; restricts to its test subjects");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  add_mc_flags(eval_cmd, ev.mc);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of all gradients on a toy model");
  gc_cmd->add_option("--seed", gc.cfg.seed, "Toy model and data seed");
  gc_cmd->add_option("--fault-layer", gc.cfg.fault_layer, "Negate this layer's gradient (harness check)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) {
      err << app.get_subcommands().front()->help();
    } else {
      err << app.help();
    }
    return kExitUsage;
  }
  if (infer_cmd->parsed() && inf.data.empty() && inf.image.empty()) {
    err << "usage error: infer needs --data or --image\n";
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) cmd_gen_data(gen, out);
    if (train_cmd->parsed()) cmd_train(tr, out);
    if (infer_cmd->parsed()) cmd_infer(inf, out);
    if (eval_cmd->parsed()) cmd_eval(ev, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ttaseg
