#pragma once

#include <cstdint>
#include <thread>
#include <vector>

// Lightweight data parallelism. Work is split into contiguous index ranges,
// so arithmetic inside each output element never depends on the thread
// count and results stay bit-identical for any CSA_THREADS setting.

namespace csaseg {

// 0 = follow CSA_THREADS env var, or hardware concurrency if unset
void set_thread_cap(unsigned n);
unsigned effective_threads();

namespace detail {

template <class F>
void parallel_ranges(int64_t count, unsigned threads, F&& body) {
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        body(int64_t(0), count);
        return;
    }
    const unsigned n = unsigned(std::min<int64_t>(count, threads));
    const int64_t chunk = (count + n - 1) / n;
    std::vector<std::thread> pool;
    pool.reserve(n - 1);
    for (unsigned t = 1; t < n; ++t) {
        const int64_t b = int64_t(t) * chunk;
        const int64_t e = std::min<int64_t>(b + chunk, count);
        if (b >= e) break;
        pool.emplace_back([&body, b, e] { body(b, e); });
    }
    body(int64_t(0), std::min<int64_t>(chunk, count));
    for (auto& th : pool) th.join();
}

} // namespace detail

template <class F>
void parallel_for(int64_t count, F&& body) {
    detail::parallel_ranges(count, effective_threads(), body);
}

} // namespace csaseg
