#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pbf {

/// Number of workers used when a caller passes 0.
inline std::size_t defaultThreads() noexcept {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots; since every task owns its RNG substream the
/// output does not depend on the thread count or schedule. The first
/// exception (lowest index) is rethrown after all workers finish.
template <class Body>
void parallelFor(std::size_t count, std::size_t threads, Body&& body) {
    if (threads == 0) threads = defaultThreads();
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex errMutex;
    std::exception_ptr firstError;
    std::size_t firstErrorIndex = count;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(errMutex);
                    if (i < firstErrorIndex) {
                        firstErrorIndex = i;
                        firstError = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (firstError) std::rethrow_exception(firstError);
}

}  // namespace pbf
