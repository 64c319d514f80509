#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

// Deterministic fork-join helper. Work is split into contiguous chunks by
// index, so filling pre-sized arrays is bitwise independent of the thread
// count; reductions must be done serially by the caller afterwards.

namespace calinv::par {

inline int& thread_limit() {
  static int limit = 0;  // 0 = hardware default
  return limit;
}

inline void set_max_threads(int n) { thread_limit() = n; }

inline int max_threads() {
  int limit = thread_limit();
  if (limit > 0) return limit;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline void parallel_for(int n, const std::function<void(int)>& body) {
  int threads = std::min(max_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int lo = t * chunk;
    int hi = std::min(n, lo + chunk);
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace calinv::par
