#include "mfg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "mfg/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mfg {
namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int threads) {
  if (threads < 1) throw ConfigError("thread count must be >= 1");
  g_threads = threads;
}

int thread_count() { return g_threads; }

void parallel_for(int n, const std::function<void(int, int)>& fn) {
  const int workers = std::min(g_threads.load(), std::max(n, 1));
  if (workers <= 1 || n < 2 * workers) {
    if (n > 0) fn(0, n);
    return;
  }
  const int chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void keep_heap_resident() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace mfg
