#pragma once

#include <functional>

#include "sdformer/numerics/tensor.hpp"

namespace sdformer {

/// Worker cap: SDFORMER_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
int worker_threads();

/// Calls fn(i) for i in [0, n) on up to `threads` threads. The first exception
/// thrown is rethrown after all workers stop.
void parallel_for(Index n, int threads, const std::function<void(Index)>& fn);

}  // namespace sdformer
