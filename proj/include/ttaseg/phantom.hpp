#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ttaseg/tensor.hpp"

namespace ttaseg {

/// Synthetic cardiac-like slice: dark background, bright myocardial ring,
/// mid-intensity blood pool. The mask is the blood pool.
struct Phantom {
  Tensor image;  // H x W in [0, 1]
  Tensor mask;   // H x W, 0/1
  int subject_id = 0;
  int slice_id = 0;

  friend bool operator==(const Phantom&, const Phantom&) = default;
};

using Dataset = std::vector<Phantom>;

struct PhantomConfig {
  std::size_t size = 64;
  double pool_radius_min = 6.0;
  double pool_radius_max = 12.0;
  double wall_min = 2.0;
  double wall_max = 4.0;
  double center_jitter = 6.0;  // max |offset| from the image center, per axis
  double noise_sigma = 0.05;
  double bias_amplitude = 0.1;

  void validate() const;
};

/// Default geometry rescaled from the 64 x 64 reference to `size`.
PhantomConfig scaled_phantom_config(std::size_t size);

inline constexpr double kBackgroundLevel = 0.1;
inline constexpr double kWallLevel = 0.8;
inline constexpr double kPoolLevel = 0.5;

/// Subject-level geometry (radius, wall, centre, bias field) comes from
/// (seed, subject_id); slice-level jitter and noise from (seed, subject_id,
/// slice_id). Pure function of its arguments.
Phantom generate_phantom(std::uint64_t seed, const PhantomConfig& cfg, int subject_id, int slice_id);

/// Subjects 0..n_subjects-1, each with slices 0..slices_per_subject-1.
Dataset generate_dataset(std::uint64_t seed, int n_subjects, int slices_per_subject, const PhantomConfig& cfg);

// Dataset directory layout:
//   manifest.txt  "ttaseg-dataset 1", "count N", "size S", then N lines
//                 "subject_id slice_id"
//   tensors.ntf   NTF1 image and mask per record, in record order
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
/// Throws FormatError (with byte offset) on malformed input; never returns
/// a partial dataset.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace ttaseg
