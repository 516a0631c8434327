#include "docpipe/retry.hpp"

#include <cmath>
#include <thread>

#include "docpipe/errors.hpp"

namespace docpipe {

Millis RetryPolicy::nominal_delay(int retry) const {
  if (retry < 1) return Millis{0.0};
  return Millis{base_delay.count() * std::pow(factor, retry - 1)};
}

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw ValidationError("retry.max_attempts: must be >= 1");
  if (base_delay.count() < 0.0) throw ValidationError("retry.base_delay_ms: must be nonnegative");
  if (factor < 0.0) throw ValidationError("retry.factor: must be nonnegative");
  if (jitter < 0.0 || jitter > 1.0) throw ValidationError("retry.jitter: must lie in [0,1]");
}

Sleeper real_sleeper() {
  return [](Millis d) {
    if (d.count() > 0.0) std::this_thread::sleep_for(d);
  };
}

Backoff::Backoff(RetryPolicy policy, std::uint64_t seed) : policy_(policy), rng_(seed) {}

Millis Backoff::delay(int retry) {
  const Millis nominal = policy_.nominal_delay(retry);
  double u = 0.0;
  {
    std::lock_guard lock(mu_);
    u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  }
  return Millis{nominal.count() * (1.0 + policy_.jitter * u)};
}

}  // namespace docpipe
