#pragma once

#include <cstddef>
#include <functional>

namespace optsens {

/// Caps the number of worker threads used by parallel_for (0 = hardware concurrency).
void set_thread_count(unsigned n);
[[nodiscard]] unsigned thread_count();

/// Runs body(i) for i in [0, n) on a static partition of the worker threads.
/// Iterations must write to disjoint outputs; results are then independent of
/// the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace optsens
