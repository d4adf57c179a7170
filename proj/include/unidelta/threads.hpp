#pragma once
// Deterministic data-parallel loop.
//
// Work item i writes only to pre-assigned slot i, so results are identical for
// any worker count. UNIFORM_DELTA_THREADS caps the pool (default: hardware
// concurrency).

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace unidelta {

inline unsigned thread_count() {
    static const unsigned cached = [] {
        unsigned n = std::thread::hardware_concurrency();
        if (n == 0) n = 1;
        if (const char* env = std::getenv("UNIFORM_DELTA_THREADS")) {
            char* end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (end != env && v >= 1 && v <= 256) n = static_cast<unsigned>(v);
        }
        return std::clamp(n, 1u, 256u);
    }();
    return cached;
}

/// Runs fn(i) for i in [0, count). fn must only touch state owned by item i.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const unsigned workers = std::min<std::size_t>(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace unidelta
