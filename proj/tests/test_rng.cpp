#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "edr/rng.hpp"

using edr::Rng;

TEST_CASE("identical seeds give identical sequences") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("normal cache preserved across copies") {
  Rng a(7);
  (void)a.normal();  // populate the spare
  Rng b = a;
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("different stream indices decorrelate") {
  Rng a = Rng::stream(99, 0);
  Rng b = Rng::stream(99, 1);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
}

TEST_CASE("stream is a pure function of (seed, index)") {
  Rng a = Rng::stream(123456, 77);
  Rng b = Rng::stream(123456, 77);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("uniform stays inside the open unit interval") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal moments roughly match N(0,1)") {
  Rng rng(2024);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("exponential and chisq1 means") {
  Rng rng(5);
  const int n = 200000;
  double se = 0.0, sc = 0.0;
  for (int i = 0; i < n; ++i) {
    se += rng.exponential();
    sc += rng.chisq1();
  }
  CHECK(std::abs(se / n - 1.0) < 0.02);
  CHECK(std::abs(sc / n - 1.0) < 0.02);
}

TEST_CASE("bernoulli frequency tracks p") {
  Rng rng(9);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3);
  CHECK(std::abs(hits / static_cast<double>(n) - 0.3) < 0.01);
}

TEST_CASE("below covers the full range") {
  Rng rng(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = rng.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}
