#pragma once

#include <cstddef>
#include <functional>

namespace vrp {

// Worker count used for data-parallel loops: VRP_THREADS if set (>= 1),
// otherwise std::thread::hardware_concurrency().
int worker_count();

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
// worker. Blocks until all chunks are done. With one worker (or tiny n) the
// call runs inline. fn must not throw into the pool; exceptions are captured
// and rethrown on the calling thread.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace vrp
