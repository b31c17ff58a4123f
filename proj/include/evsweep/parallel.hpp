#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace evsweep {

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on (n, workers), so per-chunk work is deterministic regardless
/// of scheduling.
template <class Fn>
inline void parallel_chunks(int workers, std::size_t n, Fn&& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t parts = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> threads;
  threads.reserve(parts);
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  std::size_t begin = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    threads.emplace_back([&fn, begin, len] { fn(begin, begin + len); });
    begin += len;
  }
  for (auto& t : threads) t.join();
}

}  // namespace evsweep
