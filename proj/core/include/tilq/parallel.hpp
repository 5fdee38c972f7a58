#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace tilq {

namespace detail {
inline std::atomic<std::size_t>& thread_cap() {
    static std::atomic<std::size_t> cap{0};
    return cap;
}
}  // namespace detail

/// Caps the worker count used by the simulators; 0 means hardware concurrency.
inline void set_max_threads(std::size_t n) { detail::thread_cap().store(n); }

inline std::size_t max_threads() {
    const std::size_t cap = detail::thread_cap().load();
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return cap == 0 ? hw : cap;
}

/// Runs body(begin, end) over contiguous blocks of [0, n). Each index is
/// visited by exactly one call; callers write into per-index slots and
/// reduce afterwards in index order.
template <class Body>
void parallel_blocks(std::size_t n, Body&& body) {
    const std::size_t workers = std::min(max_threads(), std::max<std::size_t>(1, n / 256));
    if (workers <= 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, w, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace tilq
