#include "semvox/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace semvox {

int worker_count() {
    static const int n = [] {
        if (const char* env = std::getenv("SEMVOX_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

void parallel_chunks(size_t n, int num_chunks,
                     const std::function<void(int, size_t, size_t)>& fn) {
    if (n == 0) return;
    num_chunks = std::max(1, std::min<int>(num_chunks, static_cast<int>(n)));
    const size_t per = (n + num_chunks - 1) / num_chunks;

    const int threads = std::min(worker_count(), num_chunks);
    if (threads <= 1) {
        for (int c = 0; c < num_chunks; ++c)
            fn(c, c * per, std::min(n, (c + 1) * per));
        return;
    }

    std::atomic<int> next{0};
    auto work = [&] {
        for (int c = next.fetch_add(1); c < num_chunks; c = next.fetch_add(1))
            fn(c, c * per, std::min(n, (c + 1) * per));
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    parallel_chunks(n, worker_count() * 4, [&](int, size_t b, size_t e) {
        for (size_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace semvox
