#pragma once

#include <cstddef>
#include <functional>

namespace abstain {

/// Worker cap: ABSTAIN_LAB_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
int thread_cap();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Exceptions from
/// any task are rethrown (the first one) after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = thread_cap());

}  // namespace abstain
