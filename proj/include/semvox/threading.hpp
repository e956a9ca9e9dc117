#pragma once

#include <cstddef>
#include <functional>

namespace semvox {

// Worker cap: SEMVOX_THREADS environment variable, else hardware concurrency.
int worker_count();

// Runs fn(chunk_index, begin, end) over [0, n) split into a fixed number of
// chunks. Chunking does not depend on the thread count, so per-chunk outputs
// merged in chunk order are deterministic.
void parallel_chunks(size_t n, int num_chunks,
                     const std::function<void(int, size_t, size_t)>& fn);

// Convenience: fn(i) for i in [0, n), parallel, no ordering guarantees; use
// only when iterations touch disjoint state.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace semvox
