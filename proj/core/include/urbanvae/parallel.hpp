#pragma once

#include <cstddef>
#include <functional>

namespace urbanvae {

/// Runs body(i) for i in [0, count) on up to `threads` worker threads.
///
/// Work is split into contiguous blocks; callers that need deterministic
/// results must write to per-index slots and reduce afterwards in index order.
/// threads <= 1 runs inline. The first exception thrown by any body is
/// rethrown on the calling thread.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace urbanvae
