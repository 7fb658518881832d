#pragma once

// Deterministic fork/join helper. Work is split into a fixed number of chunks
// independent of the thread count; callers merge chunk results in chunk order,
// so floating-point reductions are bit-identical for any HBGS_THREADS value.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace hbgs {

inline int worker_thread_count() {
    if (const char* env = std::getenv("HBGS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(chunk) for chunk in [0, n_chunks). Each chunk executes exactly once.
inline void parallel_chunks(int n_chunks, const std::function<void(int)>& fn) {
    const int threads = std::min(worker_thread_count(), n_chunks);
    if (threads <= 1) {
        for (int c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        while (true) {
            const int c = next.fetch_add(1);
            if (c >= n_chunks) break;
            fn(c);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

// Splits [0, n) into n_chunks half-open ranges; empty ranges are allowed.
struct ChunkRange {
    int begin = 0;
    int end = 0;
};

inline ChunkRange chunk_range(int n, int n_chunks, int chunk) {
    const int base = n / n_chunks;
    const int rem = n % n_chunks;
    ChunkRange r;
    r.begin = chunk * base + std::min(chunk, rem);
    r.end = r.begin + base + (chunk < rem ? 1 : 0);
    return r;
}

}  // namespace hbgs
