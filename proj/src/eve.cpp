#include "aftergate/eve.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "aftergate/parallel.hpp"

namespace aftergate {

void EveParams::validate() const {
  if (!(detector_efficiency >= 0.0 && detector_efficiency <= 1.0)) {
    throw std::invalid_argument("Eve's detector efficiency must lie in [0, 1]");
  }
  if (!(dark_prob >= 0.0 && dark_prob <= 1.0)) {
    throw std::invalid_argument("Eve's dark probability must lie in [0, 1]");
  }
  if (memory_depth < 0 || memory_depth > 3) {
    throw std::invalid_argument("Eve's memory depth must lie in {0, 1, 2, 3}");
  }
  if (!(full_power_uw > 0.0)) {
    throw std::invalid_argument("faked-state power must be positive");
  }
}

void EveParams::check_thresholds(const ThresholdCurve& d0, const ThresholdCurve& d1) const {
  for (const ThresholdCurve* c : {&d0, &d1}) {
    const ThresholdSample s = c->at(pulse_delay_ns);
    if (!(half_power_uw() <= s.p0_uw && full_power_uw >= s.p100_uw)) {
      throw std::invalid_argument(
          "faked-state power does not control both detectors at the chosen delay");
    }
  }
}

EveParams EveParams::perfect() { return EveParams{}; }

EveParams EveParams::realistic() {
  EveParams e;
  e.detector_efficiency = 0.5;
  e.dark_prob = 1e-5;
  return e;
}

std::string to_string(Strategy s) {
  return s == Strategy::kDeadtimeRespected ? "DEADTIME_RESPECTED" : "DEADTIME_EXPLOIT";
}

std::vector<EveDetection> eve_measure_frame(const AliceRecord& alice, const ChannelConfig& chan,
                                            const EveParams& eve, const FrameConfig& frame,
                                            Stream rng) {
  if (alice.size() != static_cast<std::size_t>(frame.gates_per_frame)) {
    throw std::invalid_argument("Alice's record does not match the frame length");
  }
  const double mu = chan.mean_photons();
  std::vector<EveDetection> out;
  for (int g = 0; g < frame.gates_per_frame; ++g) {
    const AliceSymbol& a = alice[static_cast<std::size_t>(g)];
    // Fixed number of draws per gate keeps gates aligned across runs.
    const Basis basis = basis_from_bit(rng.bit());
    const Outcome o = quantum_detect(mu, PhaseSetting::from(a.basis, a.bit, basis),
                                     eve.detector_efficiency, 1.0, rng);
    const bool dark = rng.uniform() < eve.dark_prob;
    const int dark_bit = rng.bit();
    if (o == Outcome::kD0 || o == Outcome::kD1) {
      out.push_back({g, basis, o == Outcome::kD1 ? 1 : 0});
    } else if (dark) {
      out.push_back({g, basis, dark_bit});
    }
  }
  return out;
}

namespace {

FakedState make_faked(const EveDetection& d, const EveParams& eve) {
  return {eve.full_power_uw, eve.pulse_delay_ns, d.basis, d.bit, d.gate};
}

void check_chi(int chi, const FrameConfig& frame) {
  if (chi < 0 || chi > frame.gates_per_frame) {
    throw std::invalid_argument("chi must lie in [0, gates_per_frame]");
  }
}

}  // namespace

BurstSchedule schedule_deadtime_respected(const std::vector<EveDetection>& detections, int chi,
                                          const EveParams& eve, const FrameConfig& frame,
                                          TimeNs dead_time_ns, int min_burst) {
  check_chi(chi, frame);
  const int n = frame.gates_per_frame;
  const int start = n - chi;
  const int cap = std::max(eve.memory_depth, 1);
  min_burst = std::clamp(min_burst, 1, cap);

  std::vector<const EveDetection*> at(static_cast<std::size_t>(n), nullptr);
  for (const auto& d : detections) {
    if (d.gate >= start && d.gate < n) at[static_cast<std::size_t>(d.gate)] = &d;
  }
  const auto pause_gates = static_cast<int>((dead_time_ns + frame.gate_period_ns - 1) /
                                            frame.gate_period_ns);

  BurstSchedule out;
  int g = start;
  while (g < n) {
    if (!at[static_cast<std::size_t>(g)]) {
      ++g;
      continue;
    }
    int run = 0;
    while (run < cap && g + run < n && at[static_cast<std::size_t>(g + run)]) ++run;
    if (run < min_burst) {
      ++g;
      continue;
    }
    for (int k = 0; k < run; ++k) {
      out.states.push_back(make_faked(*at[static_cast<std::size_t>(g + k)], eve));
    }
    out.burst_sizes.push_back(run);
    g += run - 1 + pause_gates;
  }
  return out;
}

BurstSchedule schedule_deadtime_exploit(const std::vector<EveDetection>& detections, int chi,
                                        const EveParams& eve, const FrameConfig& frame) {
  check_chi(chi, frame);
  const int start = frame.gates_per_frame - chi;
  BurstSchedule out;
  int last = -2;
  for (const auto& d : detections) {
    if (d.gate < start) continue;
    out.states.push_back(make_faked(d, eve));
    if (d.gate == last + 1) {
      ++out.burst_sizes.back();
    } else {
      out.burst_sizes.push_back(1);
    }
    last = d.gate;
  }
  return out;
}

FrameOutcome apply_attack_frame(const BurstSchedule& schedule, const AliceRecord& alice,
                                const BobConfig& bob, const FrameConfig& frame, Stream bob_rng,
                                TimeNs frame_origin) {
  return run_frame(frame, alice, 0.0, schedule.states, bob, bob_rng, frame_origin);
}

int realise_chi(double chi, int gates_per_frame, Stream rng) {
  if (!(chi >= 0.0 && chi <= gates_per_frame)) {
    throw std::invalid_argument("chi must lie in [0, gates_per_frame]");
  }
  const double base = std::floor(chi);
  const int whole = static_cast<int>(base);
  const bool extra = rng.uniform() < chi - base;
  return std::min(whole + (extra ? 1 : 0), gates_per_frame);
}

AttackFrame simulate_attack_frame(const Scenario& sc, const AttackPlan& plan, Stream frame_rng,
                                  TimeNs frame_origin) {
  const DeadtimeMode needed = plan.strategy == Strategy::kDeadtimeRespected
                                  ? DeadtimeMode::kReject
                                  : DeadtimeMode::kAcceptAndExtend;
  if (sc.bob.deadtime_mode() != needed) {
    throw std::invalid_argument(to_string(plan.strategy) +
                                " does not match the receiver's dead-time mode");
  }
  AttackFrame f;
  f.alice = alice_prepare(sc.frame, frame_rng.split(stream_tag::kAlice));
  f.detections =
      eve_measure_frame(f.alice, sc.channel, sc.eve, sc.frame, frame_rng.split(stream_tag::kEve));
  f.chi = realise_chi(plan.chi, sc.frame.gates_per_frame, frame_rng.split(stream_tag::kPlan));
  f.schedule = plan.strategy == Strategy::kDeadtimeRespected
                   ? schedule_deadtime_respected(f.detections, f.chi, sc.eve, sc.frame,
                                                 sc.bob.dead_time_ns(), plan.min_burst)
                   : schedule_deadtime_exploit(f.detections, f.chi, sc.eve, sc.frame);
  f.outcome = apply_attack_frame(f.schedule, f.alice, sc.bob, sc.frame,
                                 frame_rng.split(stream_tag::kBob), frame_origin);
  return f;
}

FrameOutcome simulate_baseline_frame(const Scenario& sc, Stream frame_rng, AliceRecord* alice_out,
                                     TimeNs frame_origin) {
  AliceRecord alice = alice_prepare(sc.frame, frame_rng.split(stream_tag::kAlice));
  FrameOutcome out = run_baseline_frame(sc.frame, sc.channel, sc.bob, alice,
                                        frame_rng.split(stream_tag::kBob), frame_origin);
  if (alice_out) *alice_out = std::move(alice);
  return out;
}

namespace {

template <typename Fn>
double mean_clicks(int frames, int threads, Fn&& clicks_of_frame) {
  std::vector<std::int64_t> clicks(static_cast<std::size_t>(frames), 0);
  parallel_for(clicks.size(), threads, [&](std::size_t i) { clicks[i] = clicks_of_frame(i); });
  std::int64_t total = 0;
  for (auto c : clicks) total += c;
  return frames > 0 ? static_cast<double>(total) / frames : 0.0;
}

}  // namespace

double baseline_rate(const Scenario& sc, Stream rng, int frames, int threads) {
  return mean_clicks(frames, threads, [&](std::size_t i) {
    return static_cast<std::int64_t>(simulate_baseline_frame(sc, rng.split(i)).clicks.size());
  });
}

double attack_rate(const Scenario& sc, const AttackPlan& plan, Stream rng, int frames,
                   int threads) {
  return mean_clicks(frames, threads, [&](std::size_t i) {
    return static_cast<std::int64_t>(simulate_attack_frame(sc, plan, rng.split(i)).outcome.clicks.size());
  });
}

ChiCalibration calibrate_chi(double target_rate, const AttackPlan& plan_template,
                             const Scenario& sc, Stream rng, int frames, int threads,
                             double tolerance) {
  ChiCalibration cal;
  cal.plan = plan_template;
  cal.target_rate = target_rate;
  const int n = sc.frame.gates_per_frame;
  if (target_rate <= 0.0) {
    cal.plan.chi = 0.0;
    cal.feasible = true;
    return cal;
  }
  std::map<int, double> cache;
  auto rate = [&](int chi) {
    if (auto it = cache.find(chi); it != cache.end()) return it->second;
    AttackPlan p = plan_template;
    p.chi = chi;
    const double r = attack_rate(sc, p, rng, frames, threads);
    ++cal.evaluations;
    cache[chi] = r;
    return r;
  };
  const double low = target_rate * (1.0 - tolerance);

  if (rate(n) < low) {
    cal.plan.chi = n;
    cal.achieved_rate = rate(n);
    cal.feasible = false;
    return cal;
  }
  if (rate(0) >= target_rate) {
    cal.plan.chi = 0.0;
    cal.achieved_rate = rate(0);
    cal.feasible = true;
    return cal;
  }
  // Smallest integer chi reaching the target itself, then interpolate with
  // its lower neighbour so the mean rate sits at the target, not the band edge.
  int lo = 0;
  int hi = n;
  if (rate(n) >= target_rate) {
    while (hi - lo > 1) {
      const int mid = lo + (hi - lo) / 2;
      (rate(mid) >= target_rate ? hi : lo) = mid;
    }
  } else {
    lo = n - 1;
  }
  const double r_lo = rate(lo);
  const double r_hi = rate(hi);
  const double frac =
      r_hi > r_lo ? std::clamp((target_rate - r_lo) / (r_hi - r_lo), 0.0, 1.0) : 1.0;
  cal.plan.chi = lo + frac;
  cal.achieved_rate = frac == 1.0 ? r_hi : attack_rate(sc, cal.plan, rng, frames, threads);
  if (frac != 1.0) ++cal.evaluations;
  cal.feasible = std::abs(cal.achieved_rate - target_rate) <= tolerance * target_rate;
  return cal;
}

ChiCalibration plan_attack(double target_rate, Strategy strategy, const Scenario& sc, Stream rng,
                           int frames, int threads, double tolerance) {
  AttackPlan templ;
  templ.strategy = strategy;
  if (strategy == Strategy::kDeadtimeExploit) {
    return calibrate_chi(target_rate, templ, sc, rng, frames, threads, tolerance);
  }
  const int cap = std::max(sc.eve.memory_depth, 1);
  ChiCalibration last;
  for (int burst = cap; burst >= 1; --burst) {
    templ.min_burst = burst;
    templ.chi = sc.frame.gates_per_frame;
    if (burst > 1 &&
        attack_rate(sc, templ, rng, frames, threads) < target_rate * (1.0 - tolerance)) {
      continue;
    }
    last = calibrate_chi(target_rate, templ, sc, rng, frames, threads, tolerance);
    if (last.feasible) return last;
  }
  return last;
}

QberEstimate run_intercept_resend(const InterceptResendConfig& cfg, int frames, Stream rng) {
  std::int64_t sifted = 0;
  std::int64_t errors = 0;
  std::int64_t raw = 0;
  for (int f = 0; f < frames; ++f) {
    Stream frame_rng = rng.split(static_cast<std::uint64_t>(f));
    const AliceRecord alice = alice_prepare(cfg.frame, frame_rng.split(stream_tag::kAlice));
    const auto detections =
        eve_measure_frame(alice, cfg.channel, cfg.eve, cfg.frame, frame_rng.split(stream_tag::kEve));
    Stream bob = frame_rng.split(stream_tag::kBob);
    for (const EveDetection& d : detections) {
      const Basis bob_basis = basis_from_bit(bob.bit());
      const Outcome o = quantum_detect(cfg.resend_mean_photons,
                                       PhaseSetting::from(d.basis, d.bit, bob_basis),
                                       cfg.bob_efficiency, cfg.bob_transmittance, bob);
      if (o == Outcome::kNone) continue;
      ++raw;
      const AliceSymbol& a = alice[static_cast<std::size_t>(d.gate)];
      if (bob_basis != a.basis) continue;
      ++sifted;
      if ((o == Outcome::kD1 ? 1 : 0) != a.bit) ++errors;
    }
  }
  return make_qber_estimate(sifted, errors, raw, frames);
}

}  // namespace aftergate
