#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace teleop {

// Static range partition across workers. Each chunk's accumulation happens
// inside the worker; callers combine chunk results in index order so the
// result does not depend on scheduling.
inline void parallel_chunks(long n, int workers,
                            const std::function<void(int chunk, long begin, long end)>& fn) {
    workers = std::max(1, workers);
    if (n <= 0) return;
    const long chunk_size = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        const long begin = static_cast<long>(w) * chunk_size;
        const long end = std::min(n, begin + chunk_size);
        if (begin >= end) break;
        threads.emplace_back([fn, w, begin, end] { fn(w, begin, end); });
    }
    for (auto& t : threads) t.join();
}

}  // namespace teleop
