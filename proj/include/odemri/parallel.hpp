#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include "odemri/tensor.hpp"

namespace odemri {

// Runs fn(i) for i in [0, count). Each index is processed exactly once; with
// threads <= 1 this is a plain serial loop, which is the bitwise reference.
// Callers must make fn(i) write only to index-i slots and do any reduction
// themselves afterwards, in index order.
template <typename Fn>
void parallel_for(Index count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Index>(threads, count));
  std::atomic<Index> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const Index i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace odemri
