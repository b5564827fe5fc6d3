#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "ttaseg/augment.hpp"
#include "ttaseg/model.hpp"
#include "ttaseg/phantom.hpp"

namespace ttaseg {

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  double lambda_l1 = 1e-5;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean combined loss plus L1 term
  double train_bce = 0.0;
  double train_dice = 0.0;  // mean soft Dice
  double val_dice = 0.0;    // mean hard Dice at a 0.5 threshold; NaN without validation data
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Partitions by subject: `holdout_subjects` randomly chosen subjects form
/// the second (test) set. Record order within each set is preserved.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, Rng& rng, int holdout_subjects);

/// Adam on the combined loss plus L1 penalty. Epoch e shuffles with stream
/// e of the shuffle seed; batch number s (counted across epochs) draws its
/// augmentation and dropout from stream s. Throws TrainingError naming the
/// epoch if the loss stops being finite.
TrainLog fit(SegModel& model, const Dataset& train, const Dataset& validation, const TrainConfig& cfg,
             const EpochCallback& on_epoch = {});

/// Mean hard Dice of the plain forward pass thresholded at 0.5 (strict).
double plain_mean_dice(const SegModel& model, const Dataset& data);

/// "epoch,train_loss,train_bce,train_dice,val_dice" plus one row per epoch.
void write_epoch_csv(const std::filesystem::path& path, const TrainLog& log);

}  // namespace ttaseg
