#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace flicker {

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
  static std::atomic<unsigned> cap{0};
  return cap;
}
}  // namespace detail

/// Caps worker threads for every parallel stage. 0 means hardware concurrency.
inline void set_thread_count(unsigned n) { detail::thread_cap().store(n); }

inline unsigned thread_count() {
  const unsigned cap = detail::thread_cap().load();
  if (cap != 0) return cap;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Work is handed out in index order; callers
/// write results into slot i so the outcome never depends on scheduling.
/// The first exception thrown by any worker is rethrown on the caller.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 0; t + 1 < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace flicker
