#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace mfsde {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs f(begin, end) over fixed-size blocks of [0, n). The block layout does
/// not depend on the thread count, so reductions done per block and combined
/// in block order give identical results for any --threads value.
template <class F>
void for_each_block(std::int64_t n, int threads, F&& f, std::int64_t block = 1024) {
    const std::int64_t n_blocks = (n + block - 1) / block;
    threads = resolve_threads(threads);
    if (threads <= 1 || n_blocks <= 1) {
        for (std::int64_t b = 0; b < n_blocks; ++b)
            f(b, b * block, std::min(n, (b + 1) * block));
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::int64_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            f(b, b * block, std::min(n, (b + 1) * block));
        }
    };
    std::vector<std::thread> pool;
    const int nt = static_cast<int>(std::min<std::int64_t>(threads, n_blocks));
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

} // namespace mfsde
