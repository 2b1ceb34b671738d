#include "cayley/parallel.hpp"

#include <atomic>
#include <algorithm>
#include <thread>
#include <vector>

namespace cayley {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  g_threads.store(std::max(1, n), std::memory_order_relaxed);
}

void parallel_chunks(i64 n, i64 chunk, const std::function<void(i64, i64)>& fn) {
  if (n <= 0) return;
  if (chunk <= 0) throw NumericError("parallel_chunks: chunk must be positive");
  i64 num_chunks = (n + chunk - 1) / chunk;
  int workers = static_cast<int>(std::min<i64>(thread_count(), num_chunks));
  if (workers <= 1) {
    for (i64 k = 0; k < num_chunks; ++k) fn(k * chunk, std::min(n, (k + 1) * chunk));
    return;
  }
  std::atomic<i64> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        i64 k = next.fetch_add(1, std::memory_order_relaxed);
        if (k >= num_chunks || failed.load(std::memory_order_relaxed)) return;
        try {
          fn(k * chunk, std::min(n, (k + 1) * chunk));
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed) std::rethrow_exception(err);
}

}  // namespace cayley
