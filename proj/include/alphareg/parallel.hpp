#pragma once

#include <cstddef>
#include <functional>

namespace alphareg {

// Thread count from ALPHAREG_THREADS when set, else hardware concurrency.
int default_thread_count();

// Runs body(0..n-1) on up to `threads` workers (<= 0 selects the default).
// Every index runs; if any throw, the exception from the lowest index is
// rethrown so failures are reported independently of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 0);

}  // namespace alphareg
