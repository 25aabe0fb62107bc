#pragma once

#include <cstddef>
#include <functional>

namespace demixkit {

// Number of worker threads: hardware concurrency, capped by the
// DEMIXKIT_THREADS environment variable when set.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) split into contiguous blocks across workers.
// Each index is processed by exactly one thread, so writers that touch only
// their own index stay deterministic regardless of thread count. Nested
// calls run inline on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace demixkit
