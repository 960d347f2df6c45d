#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <future>
#include <optional>
#include <vector>

namespace loong {

/// Runs fn(0..n-1) on up to `workers` threads. Results keep index order and
/// the lowest-index failure is rethrown once every task has finished.
template <class Fn>
auto parallel_map(std::size_t n, int workers, Fn fn) -> std::vector<decltype(fn(std::size_t{0}))> {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        slots[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace loong
