#include <doctest.h>

#include <cmath>
#include <sstream>

#include "aftergate/protocol.hpp"
#include "support.hpp"

using namespace aftergate;
using namespace aftergate::test;

namespace {

// Exact expected click count per frame for a receiver without dark counts or
// afterpulses: each live gate clicks with probability p and a click blanks
// the next ceil(dead / period) - 1 gates.
double expected_clicks_dp(int gates, double p, int blank) {
  std::vector<double> e(static_cast<std::size_t>(gates + blank + 1), 0.0);
  for (int n = gates - 1; n >= 0; --n) {
    e[n] = p * (1.0 + e[n + blank]) + (1.0 - p) * e[n + 1];
  }
  return e[0];
}

struct Sample {
  double mean = 0.0;
  double sem = 0.0;
};

Sample mean_clicks(const FrameConfig& frame, const ChannelConfig& chan, const BobConfig& bob,
                   int frames, std::uint64_t seed) {
  double sum = 0.0, sum2 = 0.0;
  const Stream root(seed);
  for (int f = 0; f < frames; ++f) {
    const Stream fr = root.split(static_cast<std::uint64_t>(f));
    const AliceRecord alice = alice_prepare(frame, fr.split(stream_tag::kAlice));
    const auto n = static_cast<double>(
        run_baseline_frame(frame, chan, bob, alice, fr.split(stream_tag::kBob)).clicks.size());
    sum += n;
    sum2 += n * n;
  }
  const double m = sum / frames;
  return {m, std::sqrt((sum2 / frames - m * m) / frames)};
}

}  // namespace

TEST_CASE("frame configuration") {
  CHECK(FrameConfig::from_frequency(5e6).gate_period_ns == 200);
  CHECK(FrameConfig::from_frequency(0.2e6).gate_period_ns == 5000);
  CHECK(FrameConfig{}.gates_per_frame == 1075);
  CHECK_THROWS_AS(FrameConfig::from_frequency(0.0), std::invalid_argument);
  ChannelConfig c;
  c.transmittance = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("no light and a quiet receiver give no clicks") {
  const BobConfig bob = make_bob(quiet(clavis(0)), quiet(clavis(1)), DeadtimeMode::kReject);
  const FrameConfig frame;
  const AliceRecord alice = alice_prepare(frame, Stream(1));
  const FrameOutcome out = run_frame(frame, alice, 0.0, {}, bob, Stream(2));
  CHECK(out.clicks.empty());
  CHECK(out.sifted_bits == 0);
}

TEST_CASE("honest click rate matches the dead-time Markov oracle") {
  const BobConfig bob = make_bob(quiet(clavis(0)), quiet(clavis(1)), DeadtimeMode::kReject);
  struct Case {
    double f;
    double t;
  };
  for (const Case c : {Case{5e6, 1.0}, Case{1e6, 0.5}, Case{0.2e6, 1.0}}) {
    const FrameConfig frame = FrameConfig::from_frequency(c.f);
    ChannelConfig chan;
    chan.transmittance = c.t;
    const double p = 1.0 - std::exp(-c.t * c.t * 0.412 * 0.1);
    const int blank = static_cast<int>((10000 + frame.gate_period_ns - 1) / frame.gate_period_ns);
    const double oracle = expected_clicks_dp(frame.gates_per_frame, p, blank);
    const Sample s = mean_clicks(frame, chan, bob, 3000, 77);
    CAPTURE(c.f);
    CAPTURE(oracle);
    CHECK(std::abs(s.mean - oracle) <= 4.0 * s.sem);
  }
}

TEST_CASE("frame invariants over many honest frames") {
  for (const DeadtimeMode mode : {DeadtimeMode::kReject, DeadtimeMode::kAcceptAndExtend}) {
    const BobConfig bob = clavis_bob(mode);
    const FrameConfig frame = FrameConfig::from_frequency(5e6);
    ChannelConfig chan;
    chan.transmittance = 0.8;
    std::int64_t clicks = 0, sifted = 0;
    for (int f = 0; f < 400; ++f) {
      const Stream fr = Stream(123).split(static_cast<std::uint64_t>(f));
      const AliceRecord alice = alice_prepare(frame, fr.split(stream_tag::kAlice));
      const FrameOutcome out =
          run_baseline_frame(frame, chan, bob, alice, fr.split(stream_tag::kBob));
      CHECK(out.errors <= out.sifted_bits);
      for (std::size_t i = 1; i < out.clicks.size(); ++i) {
        CHECK(out.clicks[i].time_ns > out.clicks[i - 1].time_ns);
      }
      for (const ClickRecord& c : out.clicks) {
        for (const DeadtimeInterval& d : out.deadtime_intervals) {
          CHECK_FALSE((c.time_ns > d.start && c.time_ns < d.end));
        }
      }
      CHECK(monitor_click_spacing(out, 10.0).empty());
      clicks += static_cast<std::int64_t>(out.clicks.size());
      sifted += out.sifted_bits;
    }
    CHECK(within_sigma(static_cast<double>(sifted) / clicks, 0.5, static_cast<double>(clicks)));
  }
}

TEST_CASE("recounted sifting matches the inline tally") {
  const BobConfig bob = clavis_bob(DeadtimeMode::kReject);
  const FrameConfig frame;
  ChannelConfig chan;
  chan.transmittance = 0.3;
  std::vector<FrameOutcome> outs;
  std::vector<AliceRecord> alices;
  std::int64_t sifted = 0, errors = 0;
  for (int f = 0; f < 200; ++f) {
    const Stream fr = Stream(8).split(static_cast<std::uint64_t>(f));
    alices.push_back(alice_prepare(frame, fr.split(stream_tag::kAlice)));
    outs.push_back(run_baseline_frame(frame, chan, bob, alices.back(), fr.split(stream_tag::kBob)));
    sifted += outs.back().sifted_bits;
    errors += outs.back().errors;
  }
  const QberEstimate q = sift_and_count(outs, alices);
  CHECK(q.sifted_total == sifted);
  CHECK(q.errors_total == errors);
  alices.pop_back();
  CHECK_THROWS_AS(sift_and_count(outs, alices), std::invalid_argument);
}

TEST_CASE("double clicks follow the configured policy") {
  DetectorParams noisy0 = quiet(clavis(0));
  DetectorParams noisy1 = quiet(clavis(1));
  noisy0.dark_prob = noisy1.dark_prob = 1.0;
  const FrameConfig frame;
  const AliceRecord alice = alice_prepare(frame, Stream(4));

  BobConfig bob = make_bob(noisy0, noisy1, DeadtimeMode::kReject);
  FrameOutcome out = run_frame(frame, alice, 0.0, {}, bob, Stream(5));
  REQUIRE_FALSE(out.clicks.empty());
  for (const ClickRecord& c : out.clicks) {
    CHECK(c.detector == Outcome::kDouble);
    CHECK((c.flags & click_flag::kDouble) != 0);
    CHECK((c.decoded_bit == 0 || c.decoded_bit == 1));
  }

  bob.double_click = DoubleClickPolicy::kDiscard;
  out = run_frame(frame, alice, 0.0, {}, bob, Stream(5));
  REQUIRE_FALSE(out.clicks.empty());
  for (const ClickRecord& c : out.clicks) {
    CHECK(c.decoded_bit == -1);
    CHECK((c.flags & click_flag::kDiscarded) != 0);
  }
  CHECK(out.sifted_bits == 0);
}

TEST_CASE("wilson interval") {
  const QberEstimate q = make_qber_estimate(100, 10, 200, 4);
  CHECK(q.qber == doctest::Approx(0.1));
  CHECK(q.wilson_low == doctest::Approx(0.0552).epsilon(0.002));
  CHECK(q.wilson_high == doctest::Approx(0.1744).epsilon(0.002));
  CHECK(q.raw_rate_per_frame == doctest::Approx(50.0));

  // Closed-form oracle for a second case.
  const double n = 2500, p = 0.3, z = 1.959963984540054;
  const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  const QberEstimate r = make_qber_estimate(2500, 750, 5000, 10);
  CHECK(r.wilson_low == doctest::Approx(centre - half).epsilon(1e-12));
  CHECK(r.wilson_high == doctest::Approx(centre + half).epsilon(1e-12));

  const QberEstimate zero = make_qber_estimate(50, 0, 50, 1);
  CHECK(zero.wilson_low == 0.0);
  CHECK(zero.wilson_high > 0.0);
}

TEST_CASE("verdicts against the two bounds") {
  auto verdict = [](std::int64_t errors) {
    return compare_to_bounds(make_qber_estimate(10000, errors, 20000, 1));
  };
  CHECK(verdict(1000) == Verdict::kSecureViolated11);
  CHECK(verdict(1100) == Verdict::kSecureViolated20);
  CHECK(verdict(1500) == Verdict::kSecureViolated20);
  CHECK(verdict(2000) == Verdict::kAttackDetected);
  CHECK(verdict(2500) == Verdict::kAttackDetected);
  CHECK_THROWS(compare_to_bounds(make_qber_estimate(0, 0, 0, 1)));
  CHECK(to_string(Verdict::kSecureViolated11) == "SECURE_VIOLATED_11");
}

TEST_CASE("click spacing monitor") {
  std::vector<ClickRecord> clicks(2);
  clicks[0].gate = 3;
  clicks[0].time_ns = 600;
  clicks[1].gate = 3;
  clicks[1].time_ns = 630;
  const auto a = monitor_click_spacing(clicks, 10.0);
  REQUIRE(a.size() == 1);
  CHECK(a[0].spacing_ns == 30);

  clicks[1].time_ns = 600 + 10001;
  CHECK(monitor_click_spacing(clicks, 10.0).empty());
  clicks[1].time_ns = 600 + 10000;
  CHECK(monitor_click_spacing(clicks, 10.0).empty());
  CHECK(monitor_click_spacing(std::span<const ClickRecord>{}, 10.0).empty());
}

TEST_CASE("trace round trip") {
  const BobConfig bob = clavis_bob(DeadtimeMode::kReject);
  const FrameConfig frame;
  ChannelConfig chan;
  const AliceRecord alice = alice_prepare(frame, Stream(31));
  const FrameOutcome out = run_baseline_frame(frame, chan, bob, alice, Stream(32));
  REQUIRE_FALSE(out.clicks.empty());

  std::stringstream ss;
  write_trace_header(ss);
  write_trace(ss, 7, out, alice);
  const auto frames = read_trace(ss);
  REQUIRE(frames.size() == 1);
  const auto& got = frames.at(7);
  REQUIRE(got.size() == out.clicks.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].gate == out.clicks[i].gate);
    CHECK(got[i].time_ns == out.clicks[i].time_ns);
    CHECK(got[i].detector == out.clicks[i].detector);
    CHECK(got[i].bob_basis == out.clicks[i].bob_basis);
    CHECK(got[i].decoded_bit == out.clicks[i].decoded_bit);
    CHECK(got[i].flags == out.clicks[i].flags);
  }

  std::stringstream bad("0 1 200 D0 0 0 0 0 1\n0 2 100 D0 0 0 0 0 1\n");
  CHECK_THROWS_AS(read_trace(bad), std::runtime_error);
  std::stringstream short_line("0 1 200 D0\n");
  CHECK_THROWS_AS(read_trace(short_line), std::runtime_error);
}

TEST_CASE("honest QBER stays under the 11% bound at moderate to high transmittance") {
  const BobConfig bob = clavis_bob(DeadtimeMode::kReject);
  for (const double f : {1e6, 5e6}) {
    for (const double t : {0.5, 1.0}) {
      const FrameConfig frame = FrameConfig::from_frequency(f);
      ChannelConfig chan;
      chan.transmittance = t;
      std::int64_t sifted = 0, errors = 0;
      for (int i = 0; i < 1000; ++i) {
        const Stream fr = Stream(55).split(static_cast<std::uint64_t>(i));
        const AliceRecord alice = alice_prepare(frame, fr.split(stream_tag::kAlice));
        const FrameOutcome out =
            run_baseline_frame(frame, chan, bob, alice, fr.split(stream_tag::kBob));
        sifted += out.sifted_bits;
        errors += out.errors;
      }
      CAPTURE(f);
      CAPTURE(t);
      CHECK(static_cast<double>(errors) / sifted < kShorPreskillBound);
    }
  }
}
