#pragma once

#include <array>
#include <cstdint>

namespace ttaseg {

/// splitmix64 finalizer; also used to spread seeds.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Combines a seed with a domain tag so unrelated consumers of one user
/// seed (shuffling, augmentation, dropout, ...) get unrelated streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

/// xoshiro256** generator seeded from splitmix64.
///
/// Doubles use the top 53 bits of each output, so uniform01() is a multiple
/// of 2^-53 in [0, 1). Normals use Box-Muller with both values consumed
/// pairwise. Every operation is integer or IEEE arithmetic only, so the
/// sequence is the same on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  double uniform01() noexcept;
  /// Uniform in [lo, hi); throws ArgumentError when lo > hi. lo == hi gives lo.
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) noexcept { return uniform01() < p; }
  double normal() noexcept;

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Independent generator for stream `index` of `base_seed`. Depends only on
/// the pair, so streams can be created in any order or on any thread.
Rng derive_stream(std::uint64_t base_seed, std::uint64_t index) noexcept;

double uniform(Rng& rng, double lo, double hi);

}  // namespace ttaseg
