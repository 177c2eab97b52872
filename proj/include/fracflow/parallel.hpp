#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace fracflow {

namespace detail {
inline std::atomic<int>& thread_setting()
{
    static std::atomic<int> n{1};
    return n;
}
} // namespace detail

inline void set_threads(int n) { detail::thread_setting() = std::max(1, n); }
inline int threads() { return detail::thread_setting(); }

/* Static partition of [0, n) into contiguous chunks. Every index is written by
 * exactly one worker, so results never depend on the thread count as long as
 * body(i) only writes slot i. */
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_chunk = 4096)
{
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads()), (n + min_chunk - 1) / min_chunk);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (std::size_t i = 0; i < std::min(n, chunk); ++i) body(i);
    for (auto& t : pool) t.join();
}

} // namespace fracflow
