#pragma once

#include <filesystem>

#include "ttaseg/tensor.hpp"

namespace ttaseg {

/// Binary 8-bit PGM (P5) of an H x W map, each value mapped to
/// round(255 * clamp(v / scale, 0, 1)). A non-positive scale writes black.
void write_pgm(const std::filesystem::path& path, const Tensor& map, double scale);

}  // namespace ttaseg
