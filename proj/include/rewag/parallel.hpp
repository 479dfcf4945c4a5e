#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <utility>
#include <vector>

namespace rewag {

/// Runs fn(begin, end) over contiguous, disjoint index chunks. The chunk
/// boundaries depend only on n and threads, never on scheduling, so code
/// that writes to per-index output slots produces identical bytes for any
/// thread count.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  if (n == 0) return;
  const std::size_t t =
      std::min<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), n);
  if (t <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t lo = i * chunk;
    const std::size_t hi = std::min(lo + chunk, n);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace rewag
