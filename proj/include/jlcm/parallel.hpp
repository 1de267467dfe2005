#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace jlcm {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(jobs, static_cast<int>(n))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Splits [0, n) into a fixed number of contiguous chunks (independent of `jobs`) and returns
// fn(begin, end) per chunk in order, so reductions over the result are deterministic.
template <class T, class F>
std::vector<T> parallel_chunks(std::size_t n, int jobs, F&& fn) {
  constexpr std::size_t kChunks = 32;
  const std::size_t chunks = std::max<std::size_t>(1, std::min(n, kChunks));
  const std::size_t size = (n + chunks - 1) / chunks;
  std::vector<T> out(chunks);
  parallel_for(chunks, jobs, [&](std::size_t c) {
    const std::size_t b = std::min(n, c * size);
    const std::size_t e = std::min(n, b + size);
    out[c] = fn(b, e);
  });
  return out;
}

// Stream seeds from a master seed: splitmix64(master + (stream + 1) * golden gamma).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace jlcm
