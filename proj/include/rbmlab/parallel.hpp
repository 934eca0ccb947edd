#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace rbmlab {

/// Worker count: RBMLAB_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, count). Indices are statically interleaved over
/// workers; results must be written to per-index slots so the outcome does not
/// depend on the worker count. The first exception thrown by any body is
/// rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Pairwise (fixed binary tree) summation; independent of evaluation order.
double pairwise_sum(const double* values, std::size_t count);

}  // namespace rbmlab
