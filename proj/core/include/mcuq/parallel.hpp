#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mcuq {

// Runs job(i) for i in [0, count) across `workers` threads.  Jobs are
// claimed from an atomic counter, so which thread runs which index is
// scheduling-dependent — results must therefore be written into
// index-addressed slots by the job itself, which keeps every output
// byte-identical no matter the worker count.  workers <= 0 selects the
// hardware concurrency.
inline void parallel_for(long count, int workers,
                         const std::function<void(long)>& job) {
    if (count <= 0) return;
    unsigned int w = workers > 0 ? static_cast<unsigned int>(workers)
                                 : std::max(1u, std::thread::hardware_concurrency());
    if (w <= 1 || count == 1) {
        for (long i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const long i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (unsigned int t = 0; t < w; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace mcuq
