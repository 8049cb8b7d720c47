#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace cellmix {

// Worker count used by parallel_for.  0 means hardware concurrency.  Results
// must not depend on this value: work is split into fixed-size chunks and
// every chunk writes only to its own slots, so any scheduling is equivalent.
int worker_count();
void set_worker_count(int n);

// Deterministic parallel loop over [0, n): body(i) must only touch state
// owned by index i.  Chunk size is fixed (independent of the worker count).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t chunk = 2048);

// Deterministic chunked reduction: combine(acc, partial_of_chunk) is applied
// in increasing chunk order on the calling thread, so the floating-point
// summation order never depends on scheduling.
template <typename T, typename ChunkFn, typename CombineFn>
T parallel_reduce_chunks(std::size_t n, std::size_t chunk, T init, ChunkFn chunk_fn,
                         CombineFn combine) {
    if (n == 0) return init;
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<T> partials(nchunks, init);
    parallel_for(
        nchunks,
        [&](std::size_t c) {
            const std::size_t lo = c * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            partials[c] = chunk_fn(lo, hi);
        },
        1);
    T acc = init;
    for (std::size_t c = 0; c < nchunks; ++c) acc = combine(acc, partials[c]);
    return acc;
}

} // namespace cellmix
