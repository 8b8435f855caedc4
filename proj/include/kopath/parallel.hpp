#pragma once

#include <cstddef>
#include <functional>

namespace kopath {

// Worker count used when a caller passes 0: KOPATH_THREADS if set and valid,
// otherwise std::thread::hardware_concurrency() (at least 1).
unsigned default_threads();

unsigned resolve_threads(unsigned requested);

// Runs body(begin, end) over contiguous chunks of [0, count) on up to
// `threads` workers. Chunks are disjoint, so bodies that write only their own
// slots produce results independent of the worker count.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace kopath
