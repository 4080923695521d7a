#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dsc {

/// Worker cap from DSC_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

namespace detail {
bool& inside_worker();
}

/// Runs body(i) for i in [0, n). Work is striped over threads; each index is
/// handled by exactly one call, so results written to slot i are identical for
/// any thread count. Nested calls from inside a worker run serially.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = detail::inside_worker() ? 1 : std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::inside_worker() = true;
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace dsc
