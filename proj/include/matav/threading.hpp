#pragma once

#include <cstddef>
#include <functional>

namespace matav {

// Worker-thread cap. Defaults to the MATAV_THREADS environment variable,
// falling back to std::thread::hardware_concurrency().
int max_threads();
void set_max_threads(int n);

// Runs fn(begin, end) over a partition of [0, n). Each index is processed by
// exactly one worker, so results are bitwise independent of the thread count
// as long as fn treats indices independently.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace matav
