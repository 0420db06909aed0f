#pragma once

#include <cstddef>
#include <functional>

namespace iclseg {

unsigned default_thread_count();

/// Runs fn(i) for every i in [0, n) across `threads` workers using a static
/// block partition. Each index must write only to its own output slot; the
/// per-index work never depends on the worker it landed on, so results are
/// identical for any thread count. threads == 0 picks the default.
/// The first exception thrown by any worker is rethrown after all join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace iclseg
