#include "aftergate/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace aftergate {

void FrameConfig::validate() const {
  if (gates_per_frame < 1) throw std::invalid_argument("gates_per_frame must be >= 1");
  if (gate_period_ns <= 0) throw std::invalid_argument("gate_period must be positive");
  if (interframe_gap_ns < 0) throw std::invalid_argument("interframe_gap must be >= 0");
}

FrameConfig FrameConfig::from_frequency(double gate_frequency_hz) {
  if (!(gate_frequency_hz > 0.0)) {
    throw std::invalid_argument("gate frequency must be positive");
  }
  FrameConfig f;
  f.gate_period_ns = static_cast<TimeNs>(std::llround(1e9 / gate_frequency_hz));
  f.validate();
  return f;
}

void ChannelConfig::validate() const {
  if (!(transmittance > 0.0 && transmittance <= 1.0)) {
    throw std::invalid_argument("transmittance must lie in (0, 1]");
  }
  if (!(mean_photons() > 0.0)) {
    throw std::invalid_argument("mean photon number must be positive");
  }
}

AliceRecord alice_prepare(const FrameConfig& frame, Stream rng) {
  AliceRecord rec(static_cast<std::size_t>(frame.gates_per_frame));
  for (auto& s : rec) {
    const std::uint64_t r = rng.next_u64();
    s.basis = basis_from_bit(static_cast<int>(r >> 63));
    s.bit = static_cast<int>((r >> 62) & 1u);
  }
  return rec;
}

void BobConfig::validate() const {
  if (!d0 || !d1) {
    throw std::invalid_argument("receiver needs two detector models");
  }
  const auto& a = d0->params();
  const auto& b = d1->params();
  if (a.quantum_efficiency != b.quantum_efficiency) {
    throw std::invalid_argument("detectors must share one quantum efficiency");
  }
  if (a.dead_time_ns() != b.dead_time_ns() || a.deadtime_mode != b.deadtime_mode) {
    throw std::invalid_argument("dead time is applied to both detectors and must match");
  }
  if (!(optical_transmittance >= 0.0 && optical_transmittance <= 1.0)) {
    throw std::invalid_argument("optical transmittance must lie in [0, 1]");
  }
}

TimeNs BobConfig::dead_time_ns() const { return d0->params().dead_time_ns(); }

namespace {

// Both detectors share the receiver's dead time: any click blanks both.
class DeadTimeTracker {
 public:
  DeadTimeTracker(DetectorState& s0, DetectorState& s1, std::vector<DeadtimeInterval>& log)
      : s0_(s0), s1_(s1), log_(log) {}

  bool dead_at(TimeNs t) const { return until_ && t < *until_; }

  void sync(TimeNs t_event) {
    std::optional<TimeNs> merged = until_;
    for (const auto& u : {s0_.dead_until, s1_.dead_until}) {
      if (u && (!merged || *u > *merged)) merged = u;
    }
    if (merged != until_) {
      if (dead_at(t_event)) {
        log_.back().end = *merged;
      } else {
        log_.push_back({t_event, *merged});
      }
      until_ = merged;
    }
    s0_.dead_until = until_;
    s1_.dead_until = until_;
  }

 private:
  DetectorState& s0_;
  DetectorState& s1_;
  std::vector<DeadtimeInterval>& log_;
  std::optional<TimeNs> until_;
};

}  // namespace

FrameOutcome run_frame(const FrameConfig& frame, const AliceRecord& alice, double mu_at_bob,
                       std::span<const FakedState> faked, const BobConfig& bob, Stream bob_rng,
                       TimeNs frame_origin) {
  frame.validate();
  bob.validate();
  if (alice.size() != static_cast<std::size_t>(frame.gates_per_frame)) {
    throw std::invalid_argument("Alice's record does not match the frame length");
  }
  const DetectorModel& m0 = *bob.d0;
  const DetectorModel& m1 = *bob.d1;
  const double efficiency = bob.quantum_efficiency();

  FrameOutcome out;
  DetectorState s0;
  DetectorState s1;
  DeadTimeTracker dead(s0, s1, out.deadtime_intervals);
  std::size_t next_faked = 0;

  for (int g = 0; g < frame.gates_per_frame; ++g) {
    const TimeNs t = frame_origin + frame.gate_time(g);
    Stream rng = bob_rng.split(static_cast<std::uint64_t>(g));
    const Basis bob_basis = basis_from_bit(rng.bit());
    const AliceSymbol& a = alice[static_cast<std::size_t>(g)];
    s0.now = t;
    s1.now = t;

    bool c0 = false;
    bool c1 = false;
    std::uint32_t flags = 0;
    TimeNs click_time = t;
    std::optional<Basis> eve_basis;

    if (!dead.dead_at(t)) {
      const auto phase = PhaseSetting::from(a.basis, a.bit, bob_basis);
      const Outcome photon = quantum_detect(mu_at_bob, phase, efficiency,
                                            bob.optical_transmittance, rng);
      const bool ph0 = photon == Outcome::kD0;
      const bool ph1 = photon == Outcome::kD1;
      const double u0 = rng.uniform();
      const double u1 = rng.uniform();
      c0 = m0.process_gate_with_photon(s0, ph0, u0);
      c1 = m1.process_gate_with_photon(s1, ph1, u1);
      if ((c0 && ph0) || (c1 && ph1)) flags |= click_flag::kSignal;
      if ((c0 && !ph0) || (c1 && !ph1)) flags |= click_flag::kNoise;
      dead.sync(t);
    }

    if (next_faked < faked.size() && faked[next_faked].target_gate < g) {
      throw std::invalid_argument("faked states must be sorted by gate, one per gate");
    }
    if (next_faked < faked.size() && faked[next_faked].target_gate == g) {
      const FakedState& fs = faked[next_faked++];
      const TimeNs pulse_t = t + static_cast<TimeNs>(std::llround(fs.delay_after_gate_ns));
      const bool was_dead = dead.dead_at(pulse_t);
      const PowerSplit split = route_faked_state(fs, bob_basis);
      const CarrierSource designation =
          fs.basis == bob_basis ? CarrierSource::kFullPower : CarrierSource::kHalfPower;
      const bool f0 =
          m0.process_bright_pulse(s0, split.d0_uw, fs.delay_after_gate_ns, designation, rng);
      dead.sync(pulse_t);
      const bool f1 =
          m1.process_bright_pulse(s1, split.d1_uw, fs.delay_after_gate_ns, designation, rng);
      dead.sync(pulse_t);
      ++out.faked_sent;
      if (was_dead) ++out.faked_in_deadtime;
      if (f0 || f1) {
        flags |= click_flag::kFaked;
        if (was_dead) flags |= click_flag::kInDeadtime;
        if (!c0 && !c1) click_time = pulse_t;
        eve_basis = fs.basis;
      }
      c0 = c0 || f0;
      c1 = c1 || f1;
    }

    if (!c0 && !c1) {
      continue;
    }
    ClickRecord rec;
    rec.gate = g;
    rec.time_ns = click_time;
    rec.bob_basis = bob_basis;
    rec.eve_basis = eve_basis;
    if (c0 && c1) {
      rec.detector = Outcome::kDouble;
      flags |= click_flag::kDouble;
      if (bob.double_click == DoubleClickPolicy::kRandomBit) {
        rec.decoded_bit = rng.bit();
      } else {
        flags |= click_flag::kDiscarded;
      }
    } else {
      rec.detector = c0 ? Outcome::kD0 : Outcome::kD1;
      rec.decoded_bit = c0 ? 0 : 1;
    }
    rec.flags = flags;
    if (rec.decoded_bit >= 0 && bob_basis == a.basis) {
      ++out.sifted_bits;
      if (rec.decoded_bit != a.bit) ++out.errors;
    }
    out.clicks.push_back(rec);
  }
  if (next_faked != faked.size()) {
    throw std::invalid_argument("faked state targets a gate outside the frame");
  }
  return out;
}

FrameOutcome run_baseline_frame(const FrameConfig& frame, const ChannelConfig& chan,
                                const BobConfig& bob, const AliceRecord& alice, Stream bob_rng,
                                TimeNs frame_origin) {
  chan.validate();
  return run_frame(frame, alice, chan.mean_photons() * chan.transmittance, {}, bob, bob_rng,
                   frame_origin);
}

QberEstimate make_qber_estimate(std::int64_t sifted, std::int64_t errors,
                                std::int64_t raw_clicks, std::int64_t frames) {
  if (errors < 0 || errors > sifted) {
    throw std::invalid_argument("error count must lie in [0, sifted]");
  }
  QberEstimate q;
  q.sifted_total = sifted;
  q.errors_total = errors;
  q.raw_rate_per_frame =
      frames > 0 ? static_cast<double>(raw_clicks) / static_cast<double>(frames) : 0.0;
  if (sifted == 0) {
    return q;
  }
  constexpr double z = 1.959963984540054;
  const double n = static_cast<double>(sifted);
  const double p = static_cast<double>(errors) / n;
  const double denom = 1.0 + z * z / n;
  const double center = (p + z * z / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n));
  q.qber = p;
  q.wilson_low = std::max(0.0, center - half);
  q.wilson_high = std::min(1.0, center + half);
  return q;
}

QberEstimate sift_and_count(std::span<const FrameOutcome> outcomes,
                            std::span<const AliceRecord> alice_records) {
  if (outcomes.size() != alice_records.size()) {
    throw std::invalid_argument("outcomes and Alice records are misaligned");
  }
  std::int64_t sifted = 0;
  std::int64_t errors = 0;
  std::int64_t raw = 0;
  for (std::size_t f = 0; f < outcomes.size(); ++f) {
    const AliceRecord& alice = alice_records[f];
    for (const ClickRecord& c : outcomes[f].clicks) {
      if (c.gate < 0 || static_cast<std::size_t>(c.gate) >= alice.size()) {
        throw std::invalid_argument("click gate index outside Alice's record");
      }
      ++raw;
      const AliceSymbol& a = alice[static_cast<std::size_t>(c.gate)];
      if (c.decoded_bit < 0 || c.bob_basis != a.basis) continue;
      ++sifted;
      if (c.decoded_bit != a.bit) ++errors;
    }
  }
  return make_qber_estimate(sifted, errors, raw, static_cast<std::int64_t>(outcomes.size()));
}

std::vector<SpacingAnomaly> monitor_click_spacing(std::span<const ClickRecord> clicks,
                                                  double dead_time_us) {
  const auto limit = static_cast<TimeNs>(std::llround(dead_time_us * 1000.0));
  std::vector<SpacingAnomaly> found;
  for (std::size_t i = 1; i < clicks.size(); ++i) {
    const TimeNs spacing = clicks[i].time_ns - clicks[i - 1].time_ns;
    if (spacing < limit) {
      found.push_back({clicks[i - 1].gate, clicks[i].gate, spacing});
    }
  }
  return found;
}

Verdict compare_to_bounds(const QberEstimate& q) {
  if (q.sifted_total <= 0) {
    throw std::invalid_argument("cannot judge a QBER without sifted bits");
  }
  if (q.qber < kShorPreskillBound) return Verdict::kSecureViolated11;
  if (q.qber < kTolerantBound) return Verdict::kSecureViolated20;
  return Verdict::kAttackDetected;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kSecureViolated11:
      return "SECURE_VIOLATED_11";
    case Verdict::kSecureViolated20:
      return "SECURE_VIOLATED_20";
    case Verdict::kAttackDetected:
      return "ATTACK_DETECTED";
  }
  return "?";
}

namespace {

const char* detector_name(Outcome o) {
  switch (o) {
    case Outcome::kD0:
      return "D0";
    case Outcome::kD1:
      return "D1";
    case Outcome::kDouble:
      return "DD";
    case Outcome::kNone:
      break;
  }
  return "--";
}

Outcome parse_detector(const std::string& s) {
  if (s == "D0") return Outcome::kD0;
  if (s == "D1") return Outcome::kD1;
  if (s == "DD") return Outcome::kDouble;
  if (s == "--") return Outcome::kNone;
  throw std::runtime_error("unknown detector field '" + s + "'");
}

}  // namespace

void write_trace_header(std::ostream& out) {
  out << "# frame gate time_ns detector bob_basis alice_basis alice_bit decoded_bit flags\n";
}

void write_trace(std::ostream& out, int frame_index, const FrameOutcome& outcome,
                 const AliceRecord& alice) {
  for (const ClickRecord& c : outcome.clicks) {
    const AliceSymbol& a = alice.at(static_cast<std::size_t>(c.gate));
    out << frame_index << ' ' << c.gate << ' ' << c.time_ns << ' ' << detector_name(c.detector)
        << ' ' << to_int(c.bob_basis) << ' ' << to_int(a.basis) << ' ' << a.bit << ' '
        << c.decoded_bit << ' ' << c.flags << '\n';
  }
}

std::map<int, std::vector<ClickRecord>> read_trace(std::istream& in) {
  std::map<int, std::vector<ClickRecord>> frames;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    int frame = 0;
    if (!(fields >> frame)) continue;
    ClickRecord c;
    std::string det;
    int bob_basis = 0, alice_basis = 0, alice_bit = 0;
    if (!(fields >> c.gate >> c.time_ns >> det >> bob_basis >> alice_basis >> alice_bit >>
          c.decoded_bit >> c.flags)) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": expected 9 fields");
    }
    c.detector = parse_detector(det);
    c.bob_basis = basis_from_bit(bob_basis);
    auto& clicks = frames[frame];
    if (!clicks.empty() && c.time_ns <= clicks.back().time_ns) {
      throw std::runtime_error("trace line " + std::to_string(line_no) +
                               ": click times must increase within a frame");
    }
    clicks.push_back(c);
  }
  return frames;
}

}  // namespace aftergate
