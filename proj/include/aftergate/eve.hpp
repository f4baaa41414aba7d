#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aftergate/protocol.hpp"

namespace aftergate {

struct EveParams {
  double detector_efficiency = 1.0;
  double dark_prob = 0.0;
  int memory_depth = 3;
  double full_power_uw = 575.0;
  double pulse_delay_ns = 7.75;

  double half_power_uw() const { return full_power_uw / 2.0; }

  void validate() const;
  /// Throws unless the half-power pulse never clicks and the full-power
  /// pulse always clicks on both detectors at the pulse delay.
  void check_thresholds(const ThresholdCurve& d0, const ThresholdCurve& d1) const;

  static EveParams perfect();
  static EveParams realistic();
};

enum class Strategy : std::uint8_t { kDeadtimeRespected, kDeadtimeExploit };

std::string to_string(Strategy s);

struct EveDetection {
  int gate = 0;
  Basis basis = Basis::kA;
  int bit = 0;
};

/// Eve sits at Alice's output and measures every pulse in a random basis.
/// A wrong-basis detection yields a random bit; dark counts yield random bits.
std::vector<EveDetection> eve_measure_frame(const AliceRecord& alice, const ChannelConfig& chan,
                                            const EveParams& eve, const FrameConfig& frame,
                                            Stream rng);

struct BurstSchedule {
  std::vector<FakedState> states;  // sorted by target gate
  std::vector<int> burst_sizes;    // faked states per burst of consecutive gates
};

/// Attacks the last `chi` gates. Runs of consecutive detections, at most
/// max(memory_depth, 1) long and at least `min_burst` long, are sent in their
/// own gates; after each burst Eve stays silent for one dead time.
BurstSchedule schedule_deadtime_respected(const std::vector<EveDetection>& detections, int chi,
                                          const EveParams& eve, const FrameConfig& frame,
                                          TimeNs dead_time_ns, int min_burst = 1);

/// Attacks the last `chi` gates, resending every detection without pauses.
BurstSchedule schedule_deadtime_exploit(const std::vector<EveDetection>& detections, int chi,
                                        const EveParams& eve, const FrameConfig& frame);

struct AttackPlan {
  Strategy strategy = Strategy::kDeadtimeRespected;
  /// Mean number of attacked gates at the end of the frame. A fractional
  /// part is realised per frame by attacking ceil(chi) gates with that
  /// probability and floor(chi) otherwise.
  double chi = 0.0;
  int min_burst = 1;  // deadtime-respected only
};

struct Scenario {
  FrameConfig frame;
  ChannelConfig channel;
  BobConfig bob;
  EveParams eve;
};

/// Bob's receiver fed only with the faked states; Eve has taken the
/// channel, so no quantum signal reaches Bob.
FrameOutcome apply_attack_frame(const BurstSchedule& schedule, const AliceRecord& alice,
                                const BobConfig& bob, const FrameConfig& frame, Stream bob_rng,
                                TimeNs frame_origin = 0);

struct AttackFrame {
  AliceRecord alice;
  std::vector<EveDetection> detections;
  BurstSchedule schedule;
  int chi = 0;
  FrameOutcome outcome;
};

int realise_chi(double chi, int gates_per_frame, Stream rng);

/// Full attacked frame from a per-frame stream: Alice, Eve, schedule, Bob.
AttackFrame simulate_attack_frame(const Scenario& sc, const AttackPlan& plan, Stream frame_rng,
                                  TimeNs frame_origin = 0);

/// Honest frame sharing Alice's and Bob's streams with simulate_attack_frame.
FrameOutcome simulate_baseline_frame(const Scenario& sc, Stream frame_rng, AliceRecord* alice_out = nullptr,
                                     TimeNs frame_origin = 0);

/// Mean Bob clicks per frame over `frames` frames split from `rng`.
double baseline_rate(const Scenario& sc, Stream rng, int frames, int threads);
double attack_rate(const Scenario& sc, const AttackPlan& plan, Stream rng, int frames,
                   int threads);

struct ChiCalibration {
  AttackPlan plan;
  bool feasible = false;
  double target_rate = 0.0;
  double achieved_rate = 0.0;
  int evaluations = 0;
};

/// Chi whose mean click rate matches the target, found by bisection on
/// integer chi with common random numbers across evaluations, then
/// interpolated between the bracketing integers. Feasible when the achieved
/// rate lies within +-tolerance of the target.
ChiCalibration calibrate_chi(double target_rate, const AttackPlan& plan_template,
                             const Scenario& sc, Stream rng, int frames, int threads,
                             double tolerance = 0.05);

/// Deadtime-respected: tries burst lengths from the memory depth downwards
/// and keeps the longest feasible one. Deadtime-exploit: calibrate_chi.
ChiCalibration plan_attack(double target_rate, Strategy strategy, const Scenario& sc, Stream rng,
                           int frames, int threads, double tolerance = 0.05);

struct InterceptResendConfig {
  FrameConfig frame;
  ChannelConfig channel;
  EveParams eve;
  double resend_mean_photons = 1.0;
  double bob_efficiency = 0.1;
  double bob_transmittance = 0.412;
};

/// Textbook intercept-resend: Eve resends weak quantum states in her own
/// basis and Bob measures them with noiseless detectors.
QberEstimate run_intercept_resend(const InterceptResendConfig& cfg, int frames, Stream rng);

}  // namespace aftergate
