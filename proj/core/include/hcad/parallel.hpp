#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace hcad {

/// Splits [0, n) into `threads` contiguous chunks and runs `fn(begin, end,
/// thread_index)` on each. Chunking is static, so for a fixed thread count the
/// work assignment (and any per-thread accumulation order) is deterministic.
/// threads <= 1 runs inline.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    fn(0, n, 0);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, t] { fn(begin, end, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace hcad
