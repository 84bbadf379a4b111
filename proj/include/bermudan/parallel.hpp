#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bermudan {

/// Worker count from BERMUDAN_THREADS (default 1). Results never depend on it:
/// callers write per-chunk outputs to fixed slots and reduce them in order.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("BERMUDAN_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

/// Runs fn(chunk) for chunk in [0, n_chunks) on worker_count() threads.
/// Nested calls run serially on the calling worker.
template <typename Fn>
void parallel_for(std::size_t n_chunks, Fn&& fn) {
    const std::size_t workers = detail::in_parallel_region ? 1 : std::min(worker_count(), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            detail::in_parallel_region = true;
            for (std::size_t c = next++; c < n_chunks; c = next++) {
                try {
                    fn(c);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace bermudan
