#include "visnli/concurrency.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace visnli {

RateLimiter::RateLimiter(double requests_per_second) : rps_(requests_per_second) {
  if (rps_ > 0.0) {
    min_interval_ = std::chrono::nanoseconds(static_cast<long long>(1e9 / rps_));
  }
}

void RateLimiter::acquire() {
  if (min_interval_.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + min_interval_;
  }
  std::this_thread::sleep_until(slot);
}

std::chrono::milliseconds RetryPolicy::backoff_for(int failed_attempts) const {
  auto delay = base_backoff;
  for (int i = 1; i < failed_attempts && delay < max_backoff; ++i) delay *= 2;
  return std::min(delay, max_backoff);
}

void sleep_for_backoff(std::chrono::milliseconds delay) {
  if (delay.count() > 0) std::this_thread::sleep_for(delay);
}

void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::clamp<std::size_t>(parallelism, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace visnli
