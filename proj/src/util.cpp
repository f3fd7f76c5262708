#include "rl3/util.hpp"

#include <atomic>
#include <exception>
#include <mutex>

namespace rl3 {

void parallel_for(int n, int num_threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (num_threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    // Fixed chunk layout: 4 chunks per thread caps scheduling overhead while
    // keeping per-index work independent of which thread ran it.
    const int chunks = std::min(n, num_threads * 4);
    const int chunk_size = (n + chunks - 1) / chunks;
    std::atomic<int> next_chunk{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        while (true) {
            const int c = next_chunk.fetch_add(1);
            if (c >= chunks) return;
            const int lo = c * chunk_size;
            const int hi = std::min(n, lo + chunk_size);
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int workers = std::min(num_threads, chunks);
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rl3
