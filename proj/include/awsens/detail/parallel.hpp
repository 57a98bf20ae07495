#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace awsens {

namespace detail {
inline std::atomic<std::size_t>& thread_cap_storage() {
  static std::atomic<std::size_t> cap{1};
  return cap;
}
}  // namespace detail

/// Upper bound on worker threads used inside the library. Defaults to 1.
inline void set_thread_cap(std::size_t n) { detail::thread_cap_storage() = std::max<std::size_t>(1, n); }
inline std::size_t thread_cap() { return detail::thread_cap_storage(); }

namespace detail {

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker
// and bodies write only to their own slots, so results do not depend on the
// number of threads.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min(thread_cap(), n);
  if (workers <= 1 || n < 8) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace detail
}  // namespace awsens
