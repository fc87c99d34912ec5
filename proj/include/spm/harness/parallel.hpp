#pragma once

#include <cstddef>
#include <functional>

namespace spm {

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Work is claimed dynamically; callers write results into
// per-index slots so the reduction order stays fixed. The first exception
// thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

int resolve_threads(int requested);

}  // namespace spm
