// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace splatedit {

/// Runs fn(i) for i in [0, count) on up to `threads` workers pulling indices from a shared
/// counter. The first exception thrown by any task is rethrown on the calling thread.
template <typename Fn>
void
parallelFor(std::size_t count, int threads, Fn &&fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failureMutex;
    auto body = [&] {
        try {
            for (std::size_t i = next++; i < count; i = next++) {
                fn(i);
            }
        } catch (...) {
            std::lock_guard lock(failureMutex);
            if (!failure) {
                failure = std::current_exception();
            }
            next = count;
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(std::min(workers, count) - 1);
    for (std::size_t t = 1; t < std::min(workers, count); ++t) {
        pool.emplace_back(body);
    }
    body();
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace splatedit
