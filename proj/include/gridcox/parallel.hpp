#pragma once

#include <cstddef>
#include <functional>

namespace gridcox {

/// Runs fn(0..n-1) on up to `threads` workers. The first exception thrown is
/// rethrown after all workers stop. threads <= 1 runs inline, in order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace gridcox
