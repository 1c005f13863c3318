/// @file parallel.hpp
/// @brief Minimal fork-join helper for independent index ranges.

#ifndef STOPREC_PARALLEL_HPP
#define STOPREC_PARALLEL_HPP

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace stoprec {

/// Runs fn(worker, begin, end) over a static partition of [begin, end) on
/// `threads` workers (0 or 1 runs inline). Callers own determinism: work for
/// index i must not depend on which worker executes it.
inline void parallel_for(std::size_t begin, std::size_t end, int threads,
                         const std::function<void(int, std::size_t, std::size_t)>& fn) {
    const std::size_t count = end > begin ? end - begin : 0;
    if (count == 0) return;
    std::size_t workers = threads <= 1 ? 1 : static_cast<std::size_t>(threads);
    workers = std::min(workers, count);
    if (workers == 1) {
        fn(0, begin, end);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = begin + w * chunk;
        const std::size_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, w, lo, hi] { fn(static_cast<int>(w), lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace stoprec

#endif  // STOPREC_PARALLEL_HPP
