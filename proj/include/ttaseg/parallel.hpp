#pragma once

#include <cstddef>
#include <functional>

namespace ttaseg {

/// Worker count: TTASEG_THREADS when set to a positive integer, otherwise the
/// machine's hardware concurrency. Read on every call.
std::size_t thread_count();

/// Runs body(i) for every i in [0, n), split into contiguous blocks across
/// up to thread_count() threads. Callers must make iterations independent;
/// the first exception thrown by any iteration is rethrown here.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ttaseg
