#include "vprom/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vprom {

namespace {
std::atomic<Index> g_threads{0};
}

void set_thread_count(Index n) { g_threads = std::max<Index>(0, n); }

Index thread_count() {
    const Index n = g_threads.load();
    if (n > 0) return n;
    return std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
}

void parallel_for(Index n, const std::function<void(Index)>& body) {
    if (n <= 0) return;
    const Index workers = std::min(n, thread_count());
    std::atomic<Index> next{0};
    std::mutex mu;
    Index failed_at = n;
    std::exception_ptr failure;

    auto run = [&]() {
        for (Index i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers - 1));
        for (Index t = 1; t < workers; ++t) pool.emplace_back(run);
        run();
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace vprom
