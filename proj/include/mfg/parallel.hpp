#ifndef MFG_PARALLEL_HPP
#define MFG_PARALLEL_HPP

// Deterministic data parallelism: workers fill disjoint slots of
// preallocated buffers and all reductions happen sequentially in index
// order afterwards, so results are independent of the thread count.

#include <cstddef>
#include <thread>
#include <vector>

namespace mfg::parallel {

inline unsigned& worker_count_ref() {
    static unsigned n = 1;
    return n;
}

/// Global cap on worker threads (1 = serial). Changing it never changes
/// numerical results, only wall clock.
inline void set_worker_count(unsigned n) { worker_count_ref() = n == 0 ? 1 : n; }
inline unsigned worker_count() { return worker_count_ref(); }

/// Apply f(i) for i in [0, n); f must only write to slots owned by i.
template <typename F>
void for_range(std::size_t n, F&& f, unsigned threads = 0) {
    const unsigned nt = threads == 0 ? worker_count() : threads;
    if (nt <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    const unsigned used = static_cast<unsigned>(std::min<std::size_t>(nt, n));
    std::vector<std::thread> pool;
    pool.reserve(used);
    const std::size_t chunk = (n + used - 1) / used;
    for (unsigned t = 0; t < used; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f]() {
            for (std::size_t i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace mfg::parallel

#endif
