#include <doctest.h>

#include <cmath>
#include <set>

#include "ttaseg/error.hpp"
#include "ttaseg/rng.hpp"

using namespace ttaseg;

TEST_CASE("splitmix64 matches the reference sequence from state 0") {
  std::uint64_t s = 0;
  CHECK(splitmix64(s) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(s) == 0x6E789E6AA1B965F4ULL);
  CHECK(splitmix64(s) == 0x06C45D188009454FULL);
}

TEST_CASE("generators are reproducible and seed sensitive") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("uniform01 is a multiple of 2^-53 in [0, 1)") {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    CHECK(std::ldexp(u, 53) == std::floor(std::ldexp(u, 53)));
  }
}

TEST_CASE("uniform and below respect their ranges") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = r.uniform(-2.0, 5.0);
    CHECK(x >= -2.0);
    CHECK(x < 5.0);
    CHECK(r.below(7) < 7);
  }
  CHECK(r.uniform(1.0, 1.0) == 1.0);
  CHECK_THROWS_AS(r.uniform(2.0, 1.0), ArgumentError);
}

TEST_CASE("normal draws have unit moments") {
  Rng r(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("derived streams depend only on (seed, index)") {
  Rng late = derive_stream(5, 9);
  for (int i = 0; i < 3; ++i) derive_stream(5, static_cast<std::uint64_t>(i)).next_u64();
  Rng again = derive_stream(5, 9);
  CHECK(late.next_u64() == again.next_u64());
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 64; ++k) firsts.insert(derive_stream(5, k).next_u64());
  CHECK(firsts.size() == 64);
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
}
