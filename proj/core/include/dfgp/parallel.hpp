#pragma once

#include <cstddef>
#include <functional>

namespace dfgp {

/// Worker cap: DFGP_THREADS when set (minimum 1), otherwise the hardware
/// concurrency.
std::size_t worker_count();

/// Runs fn(0..n-1) across workers. Each index must touch only its own output
/// slot; results are then deterministic regardless of the worker count. The
/// first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dfgp
