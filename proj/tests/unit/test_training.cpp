#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "ttaseg/adam.hpp"
#include "ttaseg/augment.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/training.hpp"

using namespace ttaseg;

namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.depth = 2;
  c.base_width = 4;
  return c;
}

Dataset small_dataset(int subjects, int slices, std::size_t size = 16) {
  PhantomConfig pc;
  pc.size = size;
  pc.pool_radius_min = 2.5;
  pc.pool_radius_max = 4.0;
  pc.wall_min = 1.0;
  pc.wall_max = 2.0;
  pc.center_jitter = 1.0;
  return generate_dataset(3, subjects, slices, pc);
}

std::vector<Tensor> snapshot(SegModel& m) {
  std::vector<Tensor> out;
  for (const auto& r : m.state()) out.push_back(*r.value);
  return out;
}

}  // namespace

TEST_CASE("Adam matches the bias-corrected update formula") {
  Tensor w({3}, std::vector<double>{1.0, -2.0, 0.5});
  std::vector<Tensor*> params{&w};
  AdamState st = make_adam_state(params, 0.01);
  const Tensor g1({3}, std::vector<double>{0.3, -0.1, 0.0});
  const Tensor g2({3}, std::vector<double>{-0.2, 0.4, 1.0});
  std::vector<double> m(3, 0.0), v(3, 0.0), ref{1.0, -2.0, 0.5};
  int t = 0;
  for (const Tensor* g : {&g1, &g2}) {
    adam_step(params, std::span<const Tensor>(g, 1), st);
    ++t;
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * (*g)[i];
      v[i] = 0.999 * v[i] + 0.001 * (*g)[i] * (*g)[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(w[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }
  }
  CHECK(st.t == 2);
  const Tensor wrong({2});
  CHECK_THROWS_AS(adam_step(params, std::span<const Tensor>(&wrong, 1), st), ShapeError);
}

TEST_CASE("subject-level split keeps subjects together") {
  const Dataset data = small_dataset(10, 3);
  Rng rng(1);
  const auto [train, test] = split_dataset(data, rng, 3);
  std::set<int> a, b;
  for (const auto& p : train) a.insert(p.subject_id);
  for (const auto& p : test) b.insert(p.subject_id);
  CHECK(a.size() == 7);
  CHECK(b.size() == 3);
  for (int id : b) CHECK(a.count(id) == 0);
  CHECK(train.size() + test.size() == data.size());
  CHECK(test.size() == 9);
  Rng again(1);
  CHECK(split_dataset(data, again, 3).second == test);
  Rng r(1);
  CHECK_THROWS_AS(split_dataset(data, r, 10), ArgumentError);
  CHECK(split_dataset(data, r, 0).second.empty());
}

TEST_CASE("zero epochs leave the model untouched") {
  SegModel m = SegModel::create(toy_config(), 1);
  const auto before = snapshot(m);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainLog log = fit(m, small_dataset(2, 1), {}, cfg);
  CHECK(log.epochs.empty());
  CHECK(snapshot(m) == before);
}

TEST_CASE("overfitting a single bright disk reaches high soft Dice") {
  const std::size_t n = 16;
  Phantom p;
  p.image = Tensor({n, n}, 0.1);
  p.mask = Tensor({n, n});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (std::hypot(x - 7.5, y - 7.5) <= 4.0) {
        p.image[y * n + x] = 0.9;
        p.mask[y * n + x] = 1.0;
      }
  // Dropout off: this checks that the optimiser can fit, not regularisation.
  ModelConfig mc = toy_config();
  mc.dropout_rate = 0.0;
  SegModel m = SegModel::create(mc, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 5;
  cfg.augment.enabled = false;
  const TrainLog log = fit(m, {p}, {p}, cfg);
  REQUIRE(log.epochs.size() == 50);
  CHECK(log.epochs.back().train_dice >= 0.95);
  CHECK(log.epochs.back().val_dice >= 0.95);

  // Loss smoothed over 10-epoch windows never rises.
  std::vector<double> smooth;
  for (std::size_t e = 10; e <= log.epochs.size(); ++e) {
    double s = 0.0;
    for (std::size_t k = e - 10; k < e; ++k) s += log.epochs[k].train_loss;
    smooth.push_back(s / 10.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] <= smooth[i - 1]);
}

TEST_CASE("training is deterministic and independent of thread count") {
  const Dataset data = small_dataset(3, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 9;
  std::vector<Tensor> runs[2];
  const char* threads[2] = {"1", "3"};
  for (int i = 0; i < 2; ++i) {
    test::ScopedEnv env("TTASEG_THREADS", threads[i]);
    SegModel m = SegModel::create(toy_config(), 4);
    fit(m, data, {}, cfg);
    runs[i] = snapshot(m);
  }
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("non-finite data stops training with the epoch") {
  Dataset data = small_dataset(1, 1);
  data[0].image[5] = std::numeric_limits<double>::quiet_NaN();
  SegModel m = SegModel::create(toy_config(), 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.augment.enabled = false;
  try {
    fit(m, data, {}, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() == 1);
  }
}

TEST_CASE("epoch CSV header and rows") {
  TrainLog log;
  log.epochs.push_back({1, -1.5, 0.25, 0.5, 0.75});
  const auto dir = test::scratch_dir("epochs_csv");
  write_epoch_csv(dir / "e.csv", log);
  const std::string text = read_file_bytes(dir / "e.csv");
  CHECK(text == "epoch,train_loss,train_bce,train_dice,val_dice\n1,-1.5,0.25,0.5,0.75\n");
}

TEST_CASE("flips and quarter turns") {
  const Tensor m = test::random_tensor({5, 5}, 1);
  CHECK(flip_horizontal(flip_horizontal(m)) == m);
  CHECK(flip_vertical(flip_vertical(m)) == m);
  CHECK(rotate90(rotate90(rotate90(rotate90(m)))) == m);
  CHECK(flip_horizontal(m)[0] == m[4]);
  CHECK(flip_vertical(m)[0] == m[20]);
  CHECK(rotate90(m)[0] == m[4]);
}

TEST_CASE("augmentation keeps masks binary and respects the switch") {
  const Dataset data = small_dataset(1, 1);
  const Phantom& p = data[0];
  AugmentConfig off;
  off.enabled = false;
  Rng rng(1);
  const AugmentedPair same = augment(p.image, p.mask, rng, off);
  CHECK(same.image == p.image);
  CHECK(same.mask == p.mask);

  bool changed = false;
  for (int i = 0; i < 20; ++i) {
    const AugmentedPair a = augment(p.image, p.mask, rng, AugmentConfig{});
    for (double v : a.mask.data()) CHECK((v == 0.0 || v == 1.0));
    changed |= !(a.image == p.image);
  }
  CHECK(changed);

  AugmentConfig flips_only;
  flips_only.flip_probability = 1.0;
  flips_only.rotation_degrees = 0.0;
  flips_only.translation_fraction = 0.0;
  flips_only.zoom = 0.0;
  const AugmentedPair f = augment(p.image, p.mask, rng, flips_only);
  CHECK(f.image == flip_vertical(flip_horizontal(p.image)));
  CHECK(f.mask == flip_vertical(flip_horizontal(p.mask)));
}
