#pragma once

#include <cstddef>
#include <functional>

namespace compsplat {

/// Worker count used by every parallel region. 1 runs inline on the calling
/// thread, which is the bitwise-deterministic serial mode.
void set_num_threads(int n);
int num_threads();

/// Splits [0, n) into one contiguous chunk per worker and calls
/// fn(begin, end, worker). Chunk boundaries depend only on n and the worker
/// count, so per-worker reductions done in worker order are reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace compsplat
