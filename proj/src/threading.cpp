#include "matav/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace matav {

namespace {

int default_threads() {
    if (const char* env = std::getenv("MATAV_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int> g_max_threads{0};  // 0 = not yet initialized

}  // namespace

int max_threads() {
    int n = g_max_threads.load(std::memory_order_relaxed);
    if (n == 0) {
        n = default_threads();
        g_max_threads.store(n, std::memory_order_relaxed);
    }
    return n;
}

void set_max_threads(int n) { g_max_threads.store(std::max(1, n), std::memory_order_relaxed); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t base = n / workers;
    const std::size_t rem = n % workers;
    std::size_t begin = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t len = base + (w < rem ? 1 : 0);
        const std::size_t end = begin + len;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
        begin = end;
    }
    for (auto& t : pool) t.join();
}

}  // namespace matav
