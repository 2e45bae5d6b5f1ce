#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cglass {

inline int default_threads() {
    const unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : int(h);
}

// Runs f(i) for i in [0, count) on up to `threads` workers. Each index is handled exactly once;
// callers keep results schedule independent by writing to slot i only.
template <class F>
void parallel_for(std::size_t count, int threads, F&& f) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next = count;
            }
        }
    };
    const int k = int(std::min<std::size_t>(count, std::size_t(threads)));
    std::vector<std::thread> pool;
    pool.reserve(k);
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace cglass
