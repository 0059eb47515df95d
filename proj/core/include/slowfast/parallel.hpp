#pragma once

#include <cstddef>
#include <functional>

namespace slowfast {

/// Worker count from SLOWFAST_WORKERS, else the hardware concurrency (at least 1).
std::size_t default_workers();

/// Runs task(i) for i in [0, n_tasks) on up to `workers` threads. Tasks are
/// claimed dynamically, so callers must write results into per-task slots and
/// reduce them in task order afterwards. The first exception thrown by any
/// task is rethrown after all threads have joined.
void parallel_for(std::size_t n_tasks, std::size_t workers,
                  const std::function<void(std::size_t)>& task);

/// Fixed partition of [0, n) into blocks of `block` items; the partition never
/// depends on the worker count.
struct BlockRange {
    std::size_t begin;
    std::size_t end;
};
inline std::size_t block_count(std::size_t n, std::size_t block) {
    return (n + block - 1) / block;
}
inline BlockRange block_range(std::size_t n, std::size_t block, std::size_t i) {
    const std::size_t b = i * block;
    return {b, b + block < n ? b + block : n};
}

}  // namespace slowfast
