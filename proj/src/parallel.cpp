#include "spikeir/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace spikeir {

namespace {

int read_env_threads() {
    const char* s = std::getenv("SPIKEIR_THREADS");
    if (!s) return 1;
    int n = std::atoi(s);
    return n >= 1 ? n : 1;
}

std::atomic<int> g_threads{0}; // 0 = not initialized yet

} // namespace

int max_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n == 0) {
        n = read_env_threads();
        g_threads.store(n, std::memory_order_relaxed);
    }
    return n;
}

void set_max_threads(int n) {
    g_threads.store(n >= 1 ? n : 1, std::memory_order_relaxed);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    int workers = max_threads();
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    if (workers > n) workers = n;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    auto run_range = [&fn](int lo, int hi) {
        for (int i = lo; i < hi; ++i) fn(i);
    };
    int chunk = (n + workers - 1) / workers;
    for (int w = 1; w < workers; ++w) {
        int lo = w * chunk;
        int hi = std::min(n, lo + chunk);
        if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    run_range(0, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

} // namespace spikeir
