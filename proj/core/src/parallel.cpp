#include "dfgp/parallel.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dfgp {

std::size_t worker_count() {
  static const std::size_t cached = [] {
    std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DFGP_THREADS")) {
      std::size_t cap = 0;
      const auto [ptr, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), cap);
      if (ec == std::errc{} && ptr == env + std::char_traits<char>::length(env) && cap >= 1) {
        workers = cap;
      }
    }
    return workers;
  }();
  return cached;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure = nullptr;
  std::mutex failure_mutex;

  auto body = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (std::thread& t : pool) t.join();

  if (failure) std::rethrow_exception(failure);
}

}  // namespace dfgp
