#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace rhlp {

// Calls fn(i) for every i in [0, count) on up to `workers` threads. fn must
// not throw and must only write to state owned by index i.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const std::size_t threads =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Worker count from RHLP_WORKERS, else the hardware concurrency.
int default_workers();

}  // namespace rhlp
