#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace thmsearch::detail {

// Runs fn(i) for i in [0, count) on at most `concurrency` threads. The first
// exception thrown by any call is rethrown after all workers stop; remaining
// indices are abandoned.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t concurrency, Fn&& fn) {
  if (count == 0) return;
  concurrency = std::clamp<std::size_t>(concurrency, 1, count);
  if (concurrency == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    while (!failed.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(concurrency);
  for (std::size_t t = 0; t < concurrency; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// Spaces out acquisitions so that at most `per_second` calls start per
// second across every thread sharing the limiter. 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second = 0.0) : per_second_(per_second) {}

  void acquire() {
    if (per_second_ <= 0.0) return;
    using clock = std::chrono::steady_clock;
    auto interval = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / per_second_));
    clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      auto now = clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  double per_second_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

}  // namespace thmsearch::detail
