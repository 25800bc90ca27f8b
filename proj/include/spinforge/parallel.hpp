#pragma once

// Deterministic task parallelism. Work items are addressed by index and write
// only their own output slot, so the partition of indices over workers can
// never change a result; SPINFORGE_THREADS caps the worker count (0 or unset
// means hardware concurrency).

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace spinforge {

inline int thread_cap() {
  const char* env = std::getenv("SPINFORGE_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 0)
    throw config_error("SPINFORGE_THREADS must be a non-negative integer, got '" +
                       std::string(env) + "'");
  return static_cast<int>(v);
}

namespace detail {

inline unsigned effective_threads(std::size_t n_items) {
  const int cap = thread_cap();
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  unsigned n = cap > 0 ? static_cast<unsigned>(cap) : hw;
  if (n > n_items) n = static_cast<unsigned>(n_items);
  return n > 0 ? n : 1;
}

}  // namespace detail

// Runs fn(i) for i in [0, n). fn must confine its writes to per-index state.
// If any calls throw, the exception from the lowest index is rethrown, so
// error behavior is schedule-independent too.
template <typename F>
inline void parallel_for(std::size_t n, F&& fn) {
  if (n == 0) return;
  const unsigned workers = detail::effective_threads(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{ 0 };
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(run);
  for (std::thread& t : pool) t.join();
  for (std::size_t i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace spinforge
