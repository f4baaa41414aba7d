#include <doctest.h>

#include <set>

#include "aftergate/random.hpp"

using namespace aftergate;

TEST_CASE("stream is a pure function of key and position") {
  Stream a(42);
  Stream b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.position() == 100);

  Stream c(42);
  c.next_u64();
  // Draw n depends only on (key, n), not on what was drawn before.
  CHECK(c.next_u64() == mix64(42 + 2 * 0x9E3779B97F4A7C15ULL));
}

TEST_CASE("split streams do not depend on the parent's position") {
  Stream a(7);
  Stream b(7);
  b.next_u64();
  b.next_u64();
  CHECK(a.split(3).next_u64() == b.split(3).next_u64());
  CHECK(a.split(3).next_u64() != a.split(4).next_u64());
}

TEST_CASE("uniform draws lie in [0, 1) with mean near 1/2") {
  Stream s(1);
  double sum = 0.0;
  int ones = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    ones += s.bit();
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.005));
  CHECK(static_cast<double>(ones) / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("derived keys for small tags are distinct") {
  std::set<std::uint64_t> keys;
  for (std::uint64_t t = 0; t < 10000; ++t) keys.insert(derive_key(99, t));
  CHECK(keys.size() == 10000);
}
