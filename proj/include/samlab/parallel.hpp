#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace samlab {

/// Worker count: SAMLAB_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
inline std::size_t thread_budget() {
  if (const char* env = std::getenv("SAMLAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, count). Work is handed out by index; callers
/// write results into per-index slots so output never depends on scheduling.
/// The first exception thrown by any task is rethrown after all workers stop.
namespace detail {
inline thread_local bool in_parallel_region = false;
}  // namespace detail

/// Nested calls run serially on the calling worker.
template <typename Fn>
void parallel_for(std::int64_t count, Fn&& fn) {
  if (count <= 0) return;
  const std::size_t workers =
      detail::in_parallel_region
          ? 1
          : std::min<std::size_t>(thread_budget(), static_cast<std::size_t>(count));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    detail::in_parallel_region = true;
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
    detail::in_parallel_region = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace samlab
