#include <doctest.h>

#include "docpipe/retry.hpp"

using namespace docpipe;

TEST_CASE("nominal delays grow geometrically") {
  RetryPolicy p;
  p.base_delay = Millis(250.0);
  p.factor = 3.0;
  CHECK(p.nominal_delay(1).count() == 250.0);
  CHECK(p.nominal_delay(2).count() == 750.0);
  CHECK(p.nominal_delay(3).count() == 2250.0);
}

TEST_CASE("jittered delays stay inside the band and are seeded") {
  RetryPolicy p;
  p.base_delay = Millis(1000.0);
  p.jitter = 0.1;
  Backoff a(p, 99), b(p, 99), c(p, 100);
  bool differs = false;
  for (int k = 1; k <= 6; ++k) {
    const double nominal = p.nominal_delay(k).count();
    const double da = a.delay(k).count();
    CHECK(da >= nominal * 0.9);
    CHECK(da <= nominal * 1.1);
    CHECK(b.delay(k).count() == da);
    differs = differs || c.delay(k).count() != da;
  }
  CHECK(differs);
}

TEST_CASE("zero jitter is exact") {
  RetryPolicy p;
  p.base_delay = Millis(10.0);
  p.jitter = 0.0;
  Backoff b(p);
  CHECK(b.delay(1).count() == 10.0);
  CHECK(b.delay(4).count() == 80.0);
}

TEST_CASE("policy validation") {
  RetryPolicy p;
  CHECK_NOTHROW(p.validate());
  p.max_attempts = 0;
  CHECK_THROWS(p.validate());
  p = {};
  p.factor = -1.0;
  CHECK_THROWS(p.validate());
  p = {};
  p.jitter = 1.5;
  CHECK_THROWS(p.validate());
  p = {};
  p.base_delay = Millis(-1.0);
  CHECK_THROWS(p.validate());
}
