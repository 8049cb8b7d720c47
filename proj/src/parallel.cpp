#include "cellmix/parallel.hpp"

namespace cellmix {

namespace {
std::atomic<int> g_workers{0};
}

int worker_count() {
    const int n = g_workers.load();
    if (n > 0) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_worker_count(int n) { g_workers.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t chunk) {
    if (n == 0) return;
    const int workers = worker_count();
    if (workers <= 1 || n <= chunk) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::atomic<std::size_t> next{0};
    auto run = [&]() {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            const std::size_t lo = c * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            for (std::size_t i = lo; i < hi; ++i) body(i);
        }
    };
    std::vector<std::thread> pool;
    const int spawn = std::min<std::size_t>(workers, nchunks) - 1;
    pool.reserve(spawn);
    for (int t = 0; t < spawn; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
}

} // namespace cellmix
