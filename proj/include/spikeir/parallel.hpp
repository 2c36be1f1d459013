#pragma once

#include <functional>

namespace spikeir {

// Worker budget for internal parallelism. Defaults to the SPIKEIR_THREADS
// environment variable, or 1 (fully serial reference mode). Parallel loops
// only ever split disjoint output ranges, so results are bit-identical for
// any thread count.
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [0, n) using at most max_threads() workers.
void parallel_for(int n, const std::function<void(int)>& fn);

} // namespace spikeir
