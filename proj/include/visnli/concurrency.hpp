#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <mutex>

namespace visnli {

// Spaces calls at least `min_interval` apart across all threads sharing it.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second = 0.0);

  void acquire();
  double requests_per_second() const { return rps_; }

 private:
  double rps_;
  std::chrono::nanoseconds min_interval_{0};
  std::chrono::steady_clock::time_point next_slot_{};
  std::mutex mu_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{200};
  std::chrono::milliseconds max_backoff{10'000};

  std::chrono::milliseconds backoff_for(int failed_attempts) const;
};

void sleep_for_backoff(std::chrono::milliseconds delay);

// Calls fn until it returns without throwing or the attempts are spent; the
// last exception is rethrown. `attempts_out` receives the number of calls made.
template <class Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn, int* attempts_out = nullptr) -> decltype(fn()) {
  const int max_attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  for (int attempt = 1;; ++attempt) {
    if (attempts_out) *attempts_out = attempt;
    try {
      return fn();
    } catch (...) {
      if (attempt >= max_attempts) throw;
    }
    sleep_for_backoff(policy.backoff_for(attempt));
  }
}

// Runs fn(i) for i in [0, n) on up to `parallelism` threads. The first
// exception thrown by any task is rethrown after all threads finish.
void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn);

}  // namespace visnli
