#include "ttaseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/rng.hpp"

namespace ttaseg {

namespace {

constexpr std::uint64_t kSubjectTag = 0x5B1EC7;
constexpr std::uint64_t kSliceTag = 0x511CE;
constexpr double kRadiusJitter = 1.5;
constexpr double kWallJitter = 0.5;

// One-pixel linear ramp across a boundary at signed distance 0.
double ramp(double inside_distance) { return std::clamp(inside_distance + 0.5, 0.0, 1.0); }

}  // namespace

void PhantomConfig::validate() const {
  if (size < 8) throw ArgumentError("phantom size must be at least 8");
  if (!(pool_radius_min > 0.0) || pool_radius_min > pool_radius_max) throw ArgumentError("bad pool radius range");
  if (!(wall_min > 0.0) || wall_min > wall_max) throw ArgumentError("bad wall thickness range");
  if (!(center_jitter >= 0.0)) throw ArgumentError("center jitter must be >= 0");
  if (!(pool_radius_max + wall_max + center_jitter < static_cast<double>(size) / 2.0)) {
    throw ArgumentError("phantom geometry does not fit: pool radius + wall + jitter must stay below size/2");
  }
  if (!(noise_sigma >= 0.0)) throw ArgumentError("noise sigma must be >= 0");
  if (!(bias_amplitude >= 0.0 && bias_amplitude < 1.0)) throw ArgumentError("bias amplitude must lie in [0, 1)");
}

PhantomConfig scaled_phantom_config(std::size_t size) {
  PhantomConfig c;
  const double f = static_cast<double>(size) / static_cast<double>(c.size);
  c.size = size;
  c.pool_radius_min *= f;
  c.pool_radius_max *= f;
  c.wall_min *= f;
  c.wall_max *= f;
  c.center_jitter *= f;
  return c;
}

Phantom generate_phantom(std::uint64_t seed, const PhantomConfig& cfg, int subject_id, int slice_id) {
  cfg.validate();
  Rng subject = derive_stream(mix_seed(seed, kSubjectTag), static_cast<std::uint64_t>(subject_id));
  const double base_radius = subject.uniform(cfg.pool_radius_min, cfg.pool_radius_max);
  const double base_wall = subject.uniform(cfg.wall_min, cfg.wall_max);
  const double half_jitter = cfg.center_jitter / 2.0;
  const double subject_dx = subject.uniform(-half_jitter, half_jitter);
  const double subject_dy = subject.uniform(-half_jitter, half_jitter);
  const double bias_phase = subject.uniform(0.0, 2.0 * std::numbers::pi);
  const double bias_angle = subject.uniform(0.0, 2.0 * std::numbers::pi);

  Rng slice = derive_stream(mix_seed(mix_seed(seed, kSliceTag), static_cast<std::uint64_t>(subject_id)),
                            static_cast<std::uint64_t>(slice_id));
  const double radius =
      std::clamp(base_radius + slice.uniform(-kRadiusJitter, kRadiusJitter), cfg.pool_radius_min, cfg.pool_radius_max);
  const double wall = std::clamp(base_wall + slice.uniform(-kWallJitter, kWallJitter), cfg.wall_min, cfg.wall_max);
  const double c0 = (static_cast<double>(cfg.size) - 1.0) / 2.0;
  const double cx = c0 + subject_dx + slice.uniform(-half_jitter, half_jitter);
  const double cy = c0 + subject_dy + slice.uniform(-half_jitter, half_jitter);

  const std::size_t n = cfg.size;
  Phantom p{Tensor({n, n}), Tensor({n, n}), subject_id, slice_id};
  const double freq = 2.0 * std::numbers::pi / static_cast<double>(n);
  const double ux = std::cos(bias_angle);
  const double uy = std::sin(bias_angle);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double fx = static_cast<double>(x);
      const double fy = static_cast<double>(y);
      const double d = std::hypot(fx - cx, fy - cy);
      const double pool = ramp(radius - d);
      const double outer = ramp(radius + wall - d);
      double v = kBackgroundLevel + (kWallLevel - kBackgroundLevel) * outer + (kPoolLevel - kWallLevel) * pool;
      v *= 1.0 + cfg.bias_amplitude * std::sin(freq * (fx * ux + fy * uy) + bias_phase);
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * slice.normal();
      p.image[y * n + x] = std::clamp(v, 0.0, 1.0);
      p.mask[y * n + x] = d <= radius ? 1.0 : 0.0;
    }
  }
  return p;
}

Dataset generate_dataset(std::uint64_t seed, int n_subjects, int slices_per_subject, const PhantomConfig& cfg) {
  if (n_subjects < 1 || slices_per_subject < 1) throw ArgumentError("subject and slice counts must be >= 1");
  Dataset data;
  data.reserve(static_cast<std::size_t>(n_subjects) * static_cast<std::size_t>(slices_per_subject));
  for (int s = 0; s < n_subjects; ++s) {
    for (int k = 0; k < slices_per_subject; ++k) data.push_back(generate_phantom(seed, cfg, s, k));
  }
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const std::size_t size = data.empty() ? 0 : data.front().image.dim(0);
  std::string manifest = "ttaseg-dataset 1\ncount " + std::to_string(data.size()) + "\nsize " + std::to_string(size) + "\n";
  std::string payload;
  for (const Phantom& p : data) {
    if (p.image.shape() != Shape{size, size} || p.mask.shape() != Shape{size, size}) {
      throw ShapeError("save_dataset: every record must be " + std::to_string(size) + "x" + std::to_string(size));
    }
    manifest += std::to_string(p.subject_id) + " " + std::to_string(p.slice_id) + "\n";
    append_ntf(payload, p.image);
    append_ntf(payload, p.mask);
  }
  write_file_bytes(dir / "tensors.ntf", payload);
  write_file_bytes(dir / "manifest.txt", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt")) {
    throw std::runtime_error("no dataset manifest at " + (dir / "manifest.txt").string());
  }
  const std::string manifest = read_file_bytes(dir / "manifest.txt");
  const std::string payload = read_file_bytes(dir / "tensors.ntf");

  std::istringstream in(manifest);
  std::string line;
  auto next = [&](const char* what) {
    const auto at = in.tellg();
    const std::uint64_t offset = at < 0 ? manifest.size() : static_cast<std::uint64_t>(at);
    if (!std::getline(in, line)) throw FormatError(std::string("dataset manifest truncated: missing ") + what, manifest.size());
    return offset;
  };
  next("header");
  if (line != "ttaseg-dataset 1") throw FormatError("not a ttaseg dataset manifest", 0);
  std::size_t count = 0;
  std::size_t size = 0;
  std::uint64_t off = next("count");
  if (std::sscanf(line.c_str(), "count %zu", &count) != 1) throw FormatError("dataset manifest: bad count line", off);
  off = next("size");
  if (std::sscanf(line.c_str(), "size %zu", &size) != 1) throw FormatError("dataset manifest: bad size line", off);

  Dataset data;
  data.reserve(count);
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    off = next("record");
    Phantom p;
    if (std::sscanf(line.c_str(), "%d %d", &p.subject_id, &p.slice_id) != 2) {
      throw FormatError("dataset manifest: bad record line", off);
    }
    const std::uint64_t image_at = pos;
    p.image = decode_ntf(payload, pos);
    const std::uint64_t mask_at = pos;
    p.mask = decode_ntf(payload, pos);
    if (p.image.shape() != Shape{size, size}) throw FormatError("dataset image has the wrong shape", image_at);
    if (p.mask.shape() != Shape{size, size}) throw FormatError("dataset mask has the wrong shape", mask_at);
    data.push_back(std::move(p));
  }
  if (pos != payload.size()) throw FormatError("trailing bytes in dataset tensors", pos);
  return data;
}

}  // namespace ttaseg
