#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace nopt {

/// Worker cap: NOPT_THREADS if set, else hardware concurrency.
inline std::size_t max_workers() {
    if (const char* env = std::getenv("NOPT_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    std::size_t hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

/// Runs fn(i, worker) for i in [0, n). Work item i is statically assigned to
/// worker i % nworkers and each worker processes its items in ascending order,
/// so the partition is independent of scheduling.
inline void parallel_for(std::size_t n,
                         const std::function<void(std::size_t, std::size_t)>& fn,
                         std::size_t nworkers = 0) {
    if (nworkers == 0) nworkers = max_workers();
    nworkers = std::min(nworkers, std::max<std::size_t>(n, 1));
    if (nworkers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nworkers);
    for (std::size_t w = 0; w < nworkers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += nworkers) fn(i, w);
        });
    for (auto& t : pool) t.join();
}

}  // namespace nopt
