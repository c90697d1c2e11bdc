#pragma once

#include <cstddef>
#include <functional>

namespace mixpo {

/// MIXPO_THREADS if set and positive, else hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for every i in [0, n) on up to `max_workers` threads
/// (0 = worker_count()). Each index runs exactly once; the first exception
/// thrown is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t max_workers = 0);

}  // namespace mixpo
