#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/phantom.hpp"

using namespace ttaseg;

TEST_CASE("centred noiseless disk has the expected area") {
  PhantomConfig pc;
  pc.pool_radius_min = pc.pool_radius_max = 10.0;
  pc.center_jitter = 0.0;
  pc.noise_sigma = 0.0;
  pc.bias_amplitude = 0.0;
  const Phantom p = generate_phantom(1, pc, 0, 0);
  const double area = p.mask.sum();
  CHECK(area >= 314.0 - 8.0);
  CHECK(area <= 314.0 + 8.0);
  // Deep inside the pool and far outside the ring sit at the nominal levels.
  CHECK(p.image.at({32, 32}) == doctest::Approx(kPoolLevel));
  CHECK(p.image.at({0, 0}) == doctest::Approx(kBackgroundLevel));
}

TEST_CASE("generation is a pure function of its arguments") {
  const PhantomConfig pc;
  CHECK(generate_phantom(7, pc, 3, 2) == generate_phantom(7, pc, 3, 2));
  CHECK_FALSE(generate_phantom(7, pc, 3, 2).image == generate_phantom(8, pc, 3, 2).image);
  CHECK_FALSE(generate_phantom(7, pc, 3, 2).image == generate_phantom(7, pc, 3, 3).image);
}

TEST_CASE("default dataset shape and coverage") {
  const Dataset data = generate_dataset(1, 33, 10, PhantomConfig{});
  REQUIRE(data.size() == 330);
  std::set<int> ids;
  for (const Phantom& p : data) {
    ids.insert(p.subject_id);
    REQUIRE(p.image.shape() == Shape{64, 64});
    const double coverage = p.mask.mean();
    CHECK(coverage >= 0.01);
    CHECK(coverage <= 0.40);
    CHECK(p.image.min() >= 0.0);
    CHECK(p.image.max() <= 1.0);
    for (double v : p.mask.data()) REQUIRE((v == 0.0 || v == 1.0));
  }
  CHECK(ids.size() == 33);
  CHECK(data[12].subject_id == 1);
  CHECK(data[12].slice_id == 2);

  const Dataset one = generate_dataset(5, 1, 1, PhantomConfig{});
  CHECK(one.size() == 1);
  CHECK(one[0] == generate_phantom(5, PhantomConfig{}, 0, 0));
}

TEST_CASE("invalid configurations") {
  PhantomConfig pc;
  pc.pool_radius_max = 30.0;
  CHECK_THROWS_AS(pc.validate(), ArgumentError);
  PhantomConfig small;
  small.size = 4;
  CHECK_THROWS_AS(small.validate(), ArgumentError);
  CHECK_THROWS_AS(generate_dataset(1, 0, 1, PhantomConfig{}), ArgumentError);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = test::scratch_dir("dataset_roundtrip");
  const Dataset data = generate_dataset(2, 3, 2, PhantomConfig{});
  save_dataset(dir, data);
  CHECK(load_dataset(dir) == data);

  const std::string payload = read_file_bytes(dir / "tensors.ntf");
  write_file_bytes(dir / "tensors.ntf", payload.substr(0, payload.size() - 5));
  CHECK_THROWS_AS(load_dataset(dir), FormatError);

  write_file_bytes(dir / "tensors.ntf", payload + "x");
  CHECK_THROWS_AS(load_dataset(dir), FormatError);

  write_file_bytes(dir / "tensors.ntf", payload);
  write_file_bytes(dir / "manifest.txt", "something else\n");
  try {
    load_dataset(dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  const auto empty_dir = test::scratch_dir("dataset_empty");
  save_dataset(empty_dir, {});
  CHECK(load_dataset(empty_dir).empty());
}

TEST_CASE("scaled configurations fit and keep the reference at 64") {
  const PhantomConfig ref = scaled_phantom_config(64);
  CHECK(ref.pool_radius_max == PhantomConfig{}.pool_radius_max);
  for (std::size_t size : {16, 32, 128}) {
    const PhantomConfig c = scaled_phantom_config(size);
    CHECK_NOTHROW(c.validate());
    CHECK(generate_phantom(1, c, 0, 0).mask.sum() > 0.0);
  }
}
