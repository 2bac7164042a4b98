#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace symplane {

/// Process-wide worker cap. 0 means "use hardware concurrency".
inline std::atomic<unsigned>& thread_limit() {
  static std::atomic<unsigned> limit{0};
  return limit;
}

inline unsigned worker_count() {
  unsigned lim = thread_limit().load();
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return lim == 0 ? hw : std::min(lim, hw);
}

/// Runs fn(chunk) for chunk in [0, n_chunks). The chunk decomposition is
/// chosen by the caller and is independent of the thread count, so any
/// per-chunk partial results combined in chunk order are bit-reproducible.
template <class Fn>
void parallel_chunks(std::size_t n_chunks, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(worker_count(), n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        fn(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace symplane
