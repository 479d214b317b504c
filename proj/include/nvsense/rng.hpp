#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace nvsense {

// SplitMix64 finalizer. Used to turn (master seed, stream id, task index)
// into statistically independent generator seeds without any coordination
// between tasks, so Monte Carlo results cannot depend on thread scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Distinct stream ids keep independent uses of the same master seed from
// ever sharing a task seed.
namespace rng_stream {
inline constexpr std::uint64_t kSweep = 1;
inline constexpr std::uint64_t kNoiseScan = 2;
inline constexpr std::uint64_t kSensitivity = 3;
inline constexpr std::uint64_t kVector = 4;
inline constexpr std::uint64_t kOdmr = 5;
inline constexpr std::uint64_t kRabi = 6;
}  // namespace rng_stream

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

inline std::mt19937_64 task_rng(std::uint64_t master, std::uint64_t stream,
                                std::uint64_t index) {
  return std::mt19937_64(derive_seed(master, stream, index));
}

// Runs fn(i) for i in [0, n). Each task must write only to its own output
// slot; with per-task seeds the result is byte-identical for every thread
// count, including the serial path.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      fn(i);
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace nvsense
