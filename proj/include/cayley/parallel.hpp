#pragma once

#include <functional>

#include "cayley/common.hpp"

// Thread helpers with a hard determinism rule: work is split into chunks at
// fixed boundaries chosen by the caller, each chunk is processed serially,
// and chunks write to disjoint output ranges. Results are then byte-identical
// for any worker count, including 1. Reductions must be per-chunk with a
// serial combine in chunk order; never accumulate across chunks concurrently.

namespace cayley {

// Process-wide worker count (default 1; deterministic regardless).
int thread_count();
void set_thread_count(int n);

// Calls fn(begin, end) for consecutive chunks [k*chunk, min((k+1)*chunk, n)).
// Chunks are distributed over workers; with 1 worker they run in order.
void parallel_chunks(i64 n, i64 chunk, const std::function<void(i64, i64)>& fn);

}  // namespace cayley
