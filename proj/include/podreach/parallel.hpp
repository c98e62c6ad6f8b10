#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace podreach {

// Runs fn(i) for i in [0, n).  Work items must be independent; each index is
// executed exactly once, so results cannot depend on the thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto nt = static_cast<std::size_t>(threads) < n ? static_cast<std::size_t>(threads) : n;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += nt) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace podreach
