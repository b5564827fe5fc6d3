#pragma once

#include <filesystem>

#include "ttaseg/model.hpp"

namespace ttaseg {

// A checkpoint is a directory holding
//   manifest.txt  "ttaseg-checkpoint 1", a config line, a tensor count, then
//                 one "name shape byte_offset" line per tensor
//   params.ntf    the NTF1 blocks concatenated in manifest order
// Parameters come first, then batch-norm running statistics.

void save_checkpoint(const std::filesystem::path& dir, const SegModel& model);
/// Throws FormatError on a malformed or mismatched manifest/payload.
SegModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace ttaseg
