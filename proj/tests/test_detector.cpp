#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "aftergate/detector.hpp"
#include "support.hpp"

using namespace aftergate;
using aftergate::test::clavis;

namespace {

// Independent evaluation of the union for a list of (age_ns, scale) pairs.
double union_oracle(const DetectorParams& p, const std::vector<std::pair<double, double>>& events) {
  double miss = 1.0 - p.dark_prob;
  for (auto [age, scale] : events) {
    double c = 0.0;
    for (const auto& t : p.traps) c += t.amplitude * std::exp(-age / (t.lifetime_us * 1e3));
    miss *= 1.0 - std::clamp(scale * c, 0.0, 1.0);
  }
  return 1.0 - miss;
}

}  // namespace

TEST_CASE("dark floor with an empty log") {
  const DetectorParams d0 = clavis(0);
  DetectorState s;
  CHECK(afterpulse_probability(s, d0, 0) == doctest::Approx(1.158e-4).epsilon(1e-12));
  const DetectorModel m(d0);
  CHECK(m.afterpulse_probability(s, 12345) == doctest::Approx(1.158e-4).epsilon(1e-12));
}

TEST_CASE("fresh unit event on D0") {
  const DetectorParams d0 = clavis(0);
  DetectorState s;
  s.events.push_back({0, 1.0});
  const double expected = 1.0 - (1.0 - 1.158e-4) * (1.0 - (0.03572 + 0.02283));
  CHECK(afterpulse_probability(s, d0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(afterpulse_probability(s, d0, 0) == doctest::Approx(0.0586).epsilon(0.002));
}

TEST_CASE("an old event decays to the dark floor") {
  const DetectorParams d1 = clavis(1);
  DetectorState s;
  s.events.push_back({0, 1.0});
  CHECK(afterpulse_probability(s, d1, 1'000'000'000) == doctest::Approx(d1.dark_prob));
  const DetectorModel m(d1);
  CHECK(m.afterpulse_probability(s, m.horizon() + 1) == doctest::Approx(d1.dark_prob));
}

TEST_CASE("two events match the product oracle") {
  const DetectorParams d0 = clavis(0);
  DetectorState s;
  s.events = {{100, 1.0}, {900, 1.836}};
  const double got = afterpulse_probability(s, d0, 2000);
  CHECK(got == doctest::Approx(union_oracle(d0, {{1900, 1.0}, {1100, 1.836}})).epsilon(1e-12));
}

TEST_CASE("union is invariant under permutation of the event log") {
  const DetectorParams d1 = clavis(1);
  Stream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    DetectorState s;
    const int n = 1 + static_cast<int>(rng.uniform() * 12);
    for (int i = 0; i < n; ++i) {
      s.events.push_back({static_cast<TimeNs>(rng.uniform() * 20000), 0.5 + 3.0 * rng.uniform()});
    }
    const double a = afterpulse_probability(s, d1, 20000);
    std::reverse(s.events.begin(), s.events.end());
    const double b = afterpulse_probability(s, d1, 20000);
    std::rotate(s.events.begin(), s.events.begin() + n / 2, s.events.end());
    const double c = afterpulse_probability(s, d1, 20000);
    CHECK(std::abs(a - b) < 1e-12);
    CHECK(std::abs(a - c) < 1e-12);
  }
}

TEST_CASE("afterpulse probability is non-increasing in time and within [P_dark, 1]") {
  for (int d = 0; d < 2; ++d) {
    const DetectorParams p = clavis(d);
    const DetectorModel m(p);
    DetectorState s;
    s.events = {{0, 1.0}, {0, 1.0}, {200, p.gammas.avalanche}, {400, 1.0}};
    double prev = 1.0;
    for (TimeNs t = 400; t < 80000; t += 37) {
      const double v = m.afterpulse_probability(s, t);
      CHECK(v <= prev + 1e-15);
      CHECK(v >= p.dark_prob - 1e-15);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
}

TEST_CASE("tabulated kernel agrees with direct evaluation and pruning is harmless") {
  const DetectorParams d0 = clavis(0);
  const DetectorModel m(d0);
  CHECK(m.horizon() >= static_cast<TimeNs>(12 * 4.277e3));
  Stream rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    DetectorState s;
    TimeNs t = 0;
    for (int i = 0; i < 8; ++i) {
      t += static_cast<TimeNs>(rng.uniform() * 30000);
      s.events.push_back({t, 1.0 + rng.uniform()});
    }
    s.now = t + static_cast<TimeNs>(rng.uniform() * 60000);
    const double direct = afterpulse_probability(s, d0, s.now);
    const double table = m.afterpulse_probability(s, s.now);
    CHECK(std::abs(direct - table) < 1e-6);
    DetectorState pruned = s;
    m.prune(pruned);
    CHECK(std::abs(afterpulse_probability(pruned, d0, s.now) - direct) < 1e-6);
  }
}

TEST_CASE("carrier registration per source") {
  const DetectorModel m0(clavis(0));
  const DetectorModel m1(clavis(1));
  DetectorState s;
  m1.register_carriers(s, 0, CarrierSource::kAvalanche);
  REQUIRE(s.events.size() == 1);
  CHECK(s.events[0].scale == doctest::Approx(3.673));

  DetectorState h;
  m0.register_carriers(h, 0, CarrierSource::kHalfPower);
  REQUIRE(h.events.size() == 1);
  CHECK(h.events[0].scale == 1.0);

  DetectorState f;
  m0.register_carriers(f, 50, CarrierSource::kFullPower);
  CHECK(f.events.size() == 2);
  CHECK(m0.afterpulse_probability(f, 50) ==
        doctest::Approx(union_oracle(m0.params(), {{0, 1.0}, {0, 1.0}})).epsilon(1e-12));

  CHECK_THROWS_AS(m0.register_carriers(f, 10, CarrierSource::kHalfPower), std::logic_error);
}

TEST_CASE("query before an event is rejected") {
  DetectorState s;
  s.events.push_back({500, 1.0});
  CHECK_THROWS_AS(afterpulse_probability(s, clavis(0), 100), std::logic_error);
}

TEST_CASE("non-finite contributions are rejected") {
  DetectorParams p = clavis(0);
  DetectorState s;
  s.events.push_back({0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(afterpulse_probability(s, p, 10), std::domain_error);
}

TEST_CASE("geiger gate click statistics") {
  SUBCASE("no light, no noise, no clicks") {
    DetectorParams p = aftergate::test::quiet(clavis(0));
    const DetectorModel m(p);
    Stream rng(1);
    DetectorState s;
    for (int g = 0; g < 10000; ++g) {
      s.now = g * 200;
      CHECK_FALSE(m.process_gate(s, 0.0, rng));
    }
  }
  SUBCASE("saturating light always clicks") {
    const DetectorModel m(clavis(0));
    Stream rng(2);
    for (int i = 0; i < 1000; ++i) {
      DetectorState s;
      CHECK(m.process_gate(s, 1e6, rng));
    }
  }
  SUBCASE("dark click rate converges to P_dark") {
    const DetectorModel m(clavis(1));
    Stream rng(3);
    const int n = 1000000;
    int clicks = 0;
    for (int i = 0; i < n; ++i) {
      DetectorState s;
      clicks += m.process_gate(s, 0.0, rng) ? 1 : 0;
    }
    CHECK(aftergate::test::within_sigma(static_cast<double>(clicks) / n, 3.812e-4, n));
  }
  SUBCASE("one fresh unit event gives the union probability") {
    const DetectorModel m(clavis(0));
    Stream rng(4);
    const int n = 200000;
    int clicks = 0;
    for (int i = 0; i < n; ++i) {
      DetectorState s;
      s.events.push_back({0, 1.0});
      clicks += m.process_gate(s, 0.0, rng) ? 1 : 0;
    }
    const double p = 1.0 - (1.0 - 1.158e-4) * (1.0 - 0.05855);
    CHECK(aftergate::test::within_sigma(static_cast<double>(clicks) / n, p, n));
  }
}

TEST_CASE("a gate click starts the dead time and logs avalanche carriers") {
  const DetectorModel m(clavis(1));
  Stream rng(9);
  DetectorState s;
  s.now = 1000;
  REQUIRE(m.process_gate(s, 1e6, rng));
  REQUIRE(s.dead_until.has_value());
  CHECK(*s.dead_until == 1000 + 10000);
  REQUIRE(s.events.size() == 1);
  CHECK(s.events[0].scale == doctest::Approx(3.673));
  s.now = 5000;
  CHECK_THROWS_AS(m.process_gate(s, 0.0, rng), std::logic_error);
}

TEST_CASE("bright pulses against the threshold curve") {
  const DetectorModel m(clavis(0));
  Stream rng(6);
  SUBCASE("full power clicks") {
    for (int i = 0; i < 100; ++i) {
      DetectorState s;
      CHECK(m.process_bright_pulse(s, 575.0, 7.75, CarrierSource::kFullPower, rng));
      CHECK(s.events.size() == 2);
      CHECK(*s.dead_until == 8 + 10000);
    }
  }
  SUBCASE("half power never clicks but still fills traps") {
    for (int i = 0; i < 100; ++i) {
      DetectorState s;
      CHECK_FALSE(m.process_bright_pulse(s, 287.5, 7.75, CarrierSource::kHalfPower, rng));
      CHECK(s.events.size() == 1);
      CHECK_FALSE(s.dead_until.has_value());
    }
  }
  SUBCASE("zero power does nothing") {
    DetectorState s;
    CHECK_FALSE(m.process_bright_pulse(s, 0.0, 7.75, CarrierSource::kFullPower, rng));
    CHECK(s.events.empty());
  }
  SUBCASE("bad inputs") {
    DetectorState s;
    CHECK_THROWS_AS(m.process_bright_pulse(s, -1.0, 7.75, CarrierSource::kFullPower, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(m.process_bright_pulse(s, 575.0, 40.0, CarrierSource::kFullPower, rng),
                    std::out_of_range);
  }
}

TEST_CASE("clicks during the dead time") {
  DetectorParams p = clavis(1);
  p.deadtime_detection_prob = 1.0;
  Stream rng(8);

  SUBCASE("reject mode ignores them") {
    p.deadtime_mode = DeadtimeMode::kReject;
    const DetectorModel m(p);
    DetectorState s;
    s.dead_until = 10000;
    CHECK_FALSE(m.handle_deadtime_click(s, 4000, rng));
    CHECK(*s.dead_until == 10000);
    s.now = 3992;
    CHECK_FALSE(m.process_bright_pulse(s, 575.0, 7.75, CarrierSource::kFullPower, rng));
    CHECK(*s.dead_until == 10000);
  }
  SUBCASE("accept mode extends the dead time") {
    p.deadtime_mode = DeadtimeMode::kAcceptAndExtend;
    const DetectorModel m(p);
    DetectorState s;
    s.dead_until = 10000;
    CHECK(m.handle_deadtime_click(s, 4000, rng));
    CHECK(*s.dead_until == 14000);
    CHECK(m.handle_deadtime_click(s, 4030, rng));
    CHECK(*s.dead_until == 14030);
  }
  SUBCASE("nested dead times keep the later end") {
    p.deadtime_mode = DeadtimeMode::kAcceptAndExtend;
    p.dead_time_us = 1.0;
    const DetectorModel m(p);
    DetectorState s;
    s.dead_until = 50000;
    CHECK(m.handle_deadtime_click(s, 4000, rng));
    CHECK(*s.dead_until == 50000);
  }
}

TEST_CASE("parameter validation") {
  DetectorParams p = clavis(0);
  CHECK_NOTHROW(p.validate());
  p.traps[0].amplitude = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = clavis(0);
  p.traps[1].lifetime_us = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = clavis(0);
  p.dark_prob = -1e-3;
  CHECK_THROWS_AS(DetectorModel{p}, std::invalid_argument);
}
