#pragma once

#include <cstddef>
#include <functional>

namespace icpp {

// Worker cap for parallel_for; 0 or 1 means serial. Default 1.
void set_thread_count(int threads);
int thread_count();

// Runs fn(i) for i in [0, n). Each index must write only its own output slot;
// callers reduce afterwards in index order, which keeps results independent of
// the thread count. The first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace icpp
