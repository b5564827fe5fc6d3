#include "ttaseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "ttaseg/adam.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/objective.hpp"

namespace ttaseg {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5AFF1E;
constexpr std::uint64_t kAugmentTag = 0xA06;
constexpr std::uint64_t kDropoutTag = 0xD209;

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

Tensor threshold_half(const Tensor& heat) {
  Tensor mask(heat.shape());
  for (std::size_t i = 0; i < heat.size(); ++i) mask[i] = heat[i] > 0.5 ? 1.0 : 0.0;
  return mask;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(lambda_l1 >= 0.0)) throw ArgumentError("L1 weight must be >= 0");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  augment.validate();
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, Rng& rng, int holdout_subjects) {
  std::set<int> ids;
  for (const Phantom& p : data) ids.insert(p.subject_id);
  if (holdout_subjects < 0) throw ArgumentError("holdout subject count must be >= 0");
  if (holdout_subjects > 0 && static_cast<std::size_t>(holdout_subjects) >= ids.size()) {
    throw ArgumentError("cannot hold out " + std::to_string(holdout_subjects) + " of " + std::to_string(ids.size()) +
                        " subjects");
  }
  std::vector<int> order(ids.begin(), ids.end());
  shuffle(order, rng);
  const std::set<int> test_ids(order.begin(), order.begin() + holdout_subjects);
  std::pair<Dataset, Dataset> out;
  for (const Phantom& p : data) (test_ids.count(p.subject_id) ? out.second : out.first).push_back(p);
  return out;
}

double plain_mean_dice(const SegModel& model, const Dataset& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const Phantom& p : data) s += hard_dice(threshold_half(model_forward(model, p.image)), p.mask);
  return s / static_cast<double>(data.size());
}

TrainLog fit(SegModel& model, const Dataset& train, const Dataset& validation, const TrainConfig& cfg,
             const EpochCallback& on_epoch) {
  cfg.validate();
  TrainLog log;
  if (cfg.epochs == 0) return log;
  if (train.empty()) throw ArgumentError("fit: training set is empty");
  const std::size_t h = train.front().image.dim(0);
  const std::size_t w = train.front().image.dim(1);
  check_input_size(model.config(), h, w);
  for (const Phantom& p : train) {
    if (p.image.shape() != Shape{h, w} || p.mask.shape() != Shape{h, w}) {
      throw ShapeError("fit: all training images must share one size");
    }
  }

  auto params = model.parameters();
  std::vector<Tensor*> param_ptrs;
  for (auto& ref : params) param_ptrs.push_back(ref.value);
  AdamState adam = make_adam_state(param_ptrs, cfg.learning_rate);

  std::uint64_t step = 0;
  const std::size_t plane = h * w;
  ForwardCache cache;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = derive_stream(mix_seed(cfg.seed, kShuffleTag), static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);

    double sum_loss = 0.0, sum_bce = 0.0, sum_dice = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      Rng aug_rng = derive_stream(mix_seed(cfg.seed, kAugmentTag), step);
      Rng drop_rng = derive_stream(mix_seed(cfg.seed, kDropoutTag), step);

      Tensor batch({n, 1, h, w});
      std::vector<Tensor> masks;
      masks.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Phantom& p = train[order[start + i]];
        AugmentedPair a = augment(p.image, p.mask, aug_rng, cfg.augment);
        std::copy(a.image.data().begin(), a.image.data().end(), batch.raw() + i * plane);
        masks.push_back(std::move(a.mask));
      }

      Tensor out = model.forward(batch, Mode::Train, &drop_rng, &cache);
      Tensor grad(out.shape());
      double batch_combined = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        Tensor pred({h, w}, std::vector<double>(out.raw() + i * plane, out.raw() + (i + 1) * plane));
        const LossBreakdown lb = combined_loss(masks[i], pred);
        batch_combined += lb.combined;
        sum_bce += lb.bce;
        sum_dice += lb.soft_dice;
        const Tensor g = loss_gradient(masks[i], pred);
        for (std::size_t j = 0; j < plane; ++j) grad[i * plane + j] = g[j] / static_cast<double>(n);
      }
      const double l1 = l1_penalty(model, cfg.lambda_l1);
      const double batch_loss = batch_combined / static_cast<double>(n) + l1;
      if (!std::isfinite(batch_loss)) throw TrainingError("non-finite training loss", epoch);
      sum_loss += batch_loss * static_cast<double>(n);

      const std::vector<Tensor> grads = model_backward(model, grad, cache, cfg.lambda_l1);
      adam_step(param_ptrs, grads, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double count = static_cast<double>(train.size());
    rec.train_loss = sum_loss / count;
    rec.train_bce = sum_bce / count;
    rec.train_dice = sum_dice / count;
    rec.val_dice = plain_mean_dice(model, validation);
    for (const auto& ref : params) {
      if (!ref.value->all_finite()) throw TrainingError("non-finite parameter " + ref.name, epoch);
    }
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

void write_epoch_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::string out = "epoch,train_loss,train_bce,train_dice,val_dice\n";
  char buf[256];
  for (const EpochRecord& r : log.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.train_bce, r.train_dice,
                  r.val_dice);
    out += buf;
  }
  write_file_bytes(path, out);
}

}  // namespace ttaseg
