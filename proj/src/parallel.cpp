#include "srgan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "srgan/error.hpp"

namespace srgan {
namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads = std::max(1, n); }

int num_threads() { return g_threads.load(); }

int configure_threads_from_env() {
  if (const char* env = std::getenv("SRGAN_BENCH_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1, ErrorCode::config,
            std::string("SRGAN_BENCH_THREADS must be a positive integer, got '") + env + "'");
    set_num_threads(static_cast<int>(v));
  }
  return num_threads();
}

int apply_thread_request(int requested) {
  set_num_threads(requested);
  if (std::getenv("SRGAN_BENCH_THREADS")) {
    const int want = num_threads();
    configure_threads_from_env();
    set_num_threads(std::min(want, num_threads()));
  }
  return num_threads();
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int workers = static_cast<int>(std::min<std::int64_t>(num_threads(), n));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::int64_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace srgan
