#pragma once

// Static-chunked loop over independent indices. Each index writes only its own
// output slot, so results do not depend on the thread count. If any body throws,
// the exception from the lowest failing index is rethrown after all threads join.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mkinterp {

template <class Body>
void parallel_for(std::ptrdiff_t count, Body&& body, unsigned max_threads = 0) {
    if (count <= 0) return;
    unsigned hw = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
    const auto threads = static_cast<std::ptrdiff_t>(std::min<std::ptrdiff_t>(hw, count / 8 + 1));
    if (threads <= 1) {
        for (std::ptrdiff_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const std::ptrdiff_t chunk = (count + threads - 1) / threads;
    for (std::ptrdiff_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            const std::ptrdiff_t end = std::min(count, (t + 1) * chunk);
            for (std::ptrdiff_t i = t * chunk; i < end; ++i) {
                try {
                    body(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    // chunks are ordered, so the first failing chunk holds the lowest index
    for (std::size_t t = 0; t < errors.size(); ++t)
        if (errors[t]) std::rethrow_exception(errors[t]);
}

}  // namespace mkinterp
