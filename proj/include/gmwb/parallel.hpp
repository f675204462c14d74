#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gmwb {

/// Runs body(worker, index) for index in [0, count). Work is handed out
/// dynamically, so callers must write results by index and never depend on
/// which worker ran what. The first exception thrown is rethrown here.
template <class Body>
void parallel_for(std::size_t count, int workers, Body&& body) {
    const std::size_t threads =
        std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(0, i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&](int worker) {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(worker, i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads - 1);
        for (std::size_t w = 1; w < threads; ++w) pool.emplace_back(run, static_cast<int>(w));
        run(0);
    }
    if (failure) std::rethrow_exception(failure);
}

inline int worker_count(std::size_t count, int workers) {
    return static_cast<int>(std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers))));
}

}  // namespace gmwb
