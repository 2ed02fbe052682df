#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace kws {

// Runs fn(i) for i in [0, n). Work items must be independent; results should
// be written into index-addressed slots so the outcome is identical for any
// job count.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> threads;
    const int count = std::min(jobs, n);
    threads.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
}

}  // namespace kws
