#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace kgsynth {

// Runs fn(i) for i in [0, n) on up to `workers` threads using a static
// contiguous partition. Results must be written to per-index slots; any
// reduction is the caller's job so that ordering stays fixed.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Pairwise tree reduction over slots[0..n) in a fixed shape, so the result is
// independent of how the slots were computed. `add(a, b)` accumulates b into a.
template <class T, class Add>
T tree_reduce(std::vector<T> slots, Add&& add) {
    if (slots.empty()) return T{};
    for (std::size_t width = 1; width < slots.size(); width *= 2) {
        for (std::size_t i = 0; i + width < slots.size(); i += 2 * width) {
            add(slots[i], slots[i + width]);
        }
    }
    return std::move(slots.front());
}

}  // namespace kgsynth
