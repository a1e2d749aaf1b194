#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace bitvo {

/// Worker count, read once from BITVO_NUM_THREADS (defaults to the hardware
/// concurrency). A value of 1 runs everything on the calling thread.
inline int num_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("BITVO_NUM_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  }();
  return n;
}

/// Calls body(begin, end) over disjoint contiguous sub-ranges of [begin, end).
/// Only for element-wise maps: each index must be written by exactly one
/// sub-range so results do not depend on the thread count.
template <typename Body>
void parallel_for(int begin, int end, Body&& body, int min_chunk = 32) {
  const int n = end - begin;
  const int workers = std::min(num_threads(), std::max(1, n / std::max(1, min_chunk)));
  if (workers <= 1) {
    if (n > 0) body(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const int b = begin + w * chunk;
    const int e = std::min(end, b + chunk);
    if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(begin, std::min(end, begin + chunk));
  for (auto& t : pool) t.join();
}

}  // namespace bitvo
