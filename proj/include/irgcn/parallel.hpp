#pragma once

#include <cstddef>
#include <functional>

namespace irgcn {

/// Worker cap: IRGCN_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Iterations must be independent; the first
/// exception thrown by any iteration is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Keeps freed activation buffers mapped between epochs (glibc only; a no-op
/// elsewhere). Training reallocates the same large matrices every pass.
void retain_freed_memory();

}  // namespace irgcn
