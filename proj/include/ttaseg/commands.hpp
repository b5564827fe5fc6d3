#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ttaseg {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses `args` (program name excluded) and runs one subcommand:
/// gen-data, train, infer, eval or gradcheck. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Keeps large tensor buffers on the heap instead of fresh mappings per
/// allocation. Purely a speed setting; no effect on results.
void tune_allocator();

}  // namespace ttaseg
