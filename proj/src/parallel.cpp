#include "parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fedlab {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }

int max_threads() { return g_max_threads.load(); }

void parallel_for(int count, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  int workers = max_threads();
  if (workers > count) workers = count;
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }

  // Static contiguous chunks; the split depends only on (count, workers), so
  // a given index always runs as the same self-contained task.
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    int begin = int(int64_t(count) * w / workers);
    int end = int(int64_t(count) * (w + 1) / workers);
    pool.emplace_back([&, begin, end] {
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fedlab
