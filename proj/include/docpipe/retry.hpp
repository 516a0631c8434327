#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <random>

namespace docpipe {

using Millis = std::chrono::duration<double, std::milli>;

struct RetryPolicy {
  int max_attempts = 3;
  Millis base_delay{1000.0};
  double factor = 2.0;
  double jitter = 0.1;  // fraction, delays land in nominal * (1 +/- jitter)

  // Nominal (jitter-free) delay before retry k, k >= 1: base * factor^(k-1).
  Millis nominal_delay(int retry) const;
  void validate() const;
};

using Sleeper = std::function<void(Millis)>;

Sleeper real_sleeper();

// Draws jittered delays; shared by concurrent callers.
class Backoff {
 public:
  explicit Backoff(RetryPolicy policy, std::uint64_t seed = 0x5eed);

  const RetryPolicy& policy() const { return policy_; }
  Millis delay(int retry);

 private:
  RetryPolicy policy_;
  std::mutex mu_;
  std::mt19937_64 rng_;
};

}  // namespace docpipe
