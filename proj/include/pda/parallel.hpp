#pragma once

#include <cstddef>
#include <functional>

namespace pda {

// Worker count: PDA_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint, so
// results that are written per index are independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace pda
