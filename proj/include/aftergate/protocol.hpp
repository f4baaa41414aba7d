#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aftergate/detector.hpp"
#include "aftergate/optics.hpp"
#include "aftergate/random.hpp"

namespace aftergate {

struct FrameConfig {
  int gates_per_frame = 1075;
  TimeNs gate_period_ns = 200;
  TimeNs interframe_gap_ns = 50000;

  static FrameConfig from_frequency(double gate_frequency_hz);

  double gate_frequency_hz() const { return 1e9 / static_cast<double>(gate_period_ns); }
  TimeNs gate_time(int gate) const { return static_cast<TimeNs>(gate) * gate_period_ns; }
  /// Time from one frame start to the next.
  TimeNs frame_span() const {
    return static_cast<TimeNs>(gates_per_frame) * gate_period_ns + interframe_gap_ns;
  }
  void validate() const;
};

struct ChannelConfig {
  double transmittance = 1.0;
  std::optional<double> alice_mean_photons;  // defaults to transmittance

  double mean_photons() const { return alice_mean_photons.value_or(transmittance); }
  void validate() const;
};

struct AliceSymbol {
  Basis basis = Basis::kA;
  int bit = 0;
};
using AliceRecord = std::vector<AliceSymbol>;

AliceRecord alice_prepare(const FrameConfig& frame, Stream rng);

enum class DoubleClickPolicy : std::uint8_t { kRandomBit, kDiscard };

/// Bob's receiver: the two detectors, the optics in front of them and how
/// double clicks are decoded.
struct BobConfig {
  DetectorModelPtr d0;
  DetectorModelPtr d1;
  double optical_transmittance = 0.412;
  DoubleClickPolicy double_click = DoubleClickPolicy::kRandomBit;

  /// Throws when a detector is missing or the efficiencies differ.
  void validate() const;
  double quantum_efficiency() const { return d0->params().quantum_efficiency; }
  TimeNs dead_time_ns() const;
  DeadtimeMode deadtime_mode() const { return d0->params().deadtime_mode; }
};

namespace click_flag {
inline constexpr std::uint32_t kSignal = 1u << 0;        // photon from the channel
inline constexpr std::uint32_t kNoise = 1u << 1;         // dark count or afterpulse
inline constexpr std::uint32_t kFaked = 1u << 2;         // bright faked state
inline constexpr std::uint32_t kDouble = 1u << 3;        // both detectors
inline constexpr std::uint32_t kInDeadtime = 1u << 4;    // accepted during dead time
inline constexpr std::uint32_t kDiscarded = 1u << 5;     // double click dropped
}  // namespace click_flag

struct ClickRecord {
  int gate = 0;
  TimeNs time_ns = 0;
  Outcome detector = Outcome::kNone;
  Basis bob_basis = Basis::kA;
  int decoded_bit = -1;  // -1 when discarded
  std::uint32_t flags = 0;
  std::optional<Basis> eve_basis;  // set for faked-state clicks
};

struct DeadtimeInterval {
  TimeNs start = 0;
  TimeNs end = 0;
};

struct FrameOutcome {
  std::vector<ClickRecord> clicks;
  std::int64_t sifted_bits = 0;
  std::int64_t errors = 0;
  std::vector<DeadtimeInterval> deadtime_intervals;
  std::int64_t faked_sent = 0;
  std::int64_t faked_in_deadtime = 0;
};

/// One frame through Bob's receiver. `mu_at_bob` is the mean photon number
/// reaching Bob's input per gate (0 when Eve intercepts everything);
/// `faked` lists bright states sorted by target gate. Every gate draws from
/// its own split of `bob_rng`, so runs are aligned gate by gate.
FrameOutcome run_frame(const FrameConfig& frame, const AliceRecord& alice, double mu_at_bob,
                       std::span<const FakedState> faked, const BobConfig& bob, Stream bob_rng,
                       TimeNs frame_origin = 0);

/// Honest session: Alice's pulses cross the channel to Bob.
FrameOutcome run_baseline_frame(const FrameConfig& frame, const ChannelConfig& chan,
                                const BobConfig& bob, const AliceRecord& alice, Stream bob_rng,
                                TimeNs frame_origin = 0);

struct QberEstimate {
  double qber = 0.0;
  std::int64_t sifted_total = 0;
  std::int64_t errors_total = 0;
  double wilson_low = 0.0;
  double wilson_high = 1.0;
  double raw_rate_per_frame = 0.0;
};

/// Wilson score interval at 95%.
QberEstimate make_qber_estimate(std::int64_t sifted, std::int64_t errors,
                                std::int64_t raw_clicks, std::int64_t frames);

/// Recounts sifted bits and errors from click records and Alice's records.
/// Throws std::invalid_argument when the two spans are misaligned.
QberEstimate sift_and_count(std::span<const FrameOutcome> outcomes,
                            std::span<const AliceRecord> alice_records);

struct SpacingAnomaly {
  int first_gate = 0;
  int second_gate = 0;
  TimeNs spacing_ns = 0;
};

std::vector<SpacingAnomaly> monitor_click_spacing(std::span<const ClickRecord> clicks,
                                                  double dead_time_us);
inline std::vector<SpacingAnomaly> monitor_click_spacing(const FrameOutcome& outcome,
                                                         double dead_time_us) {
  return monitor_click_spacing(outcome.clicks, dead_time_us);
}

enum class Verdict : std::uint8_t { kSecureViolated11, kSecureViolated20, kAttackDetected };

inline constexpr double kShorPreskillBound = 0.11;
inline constexpr double kTolerantBound = 0.20;

Verdict compare_to_bounds(const QberEstimate& q);
std::string to_string(Verdict v);

/// Line-delimited trace:
/// frame gate time_ns detector bob_basis alice_basis alice_bit decoded_bit flags
void write_trace_header(std::ostream& out);
void write_trace(std::ostream& out, int frame_index, const FrameOutcome& outcome,
                 const AliceRecord& alice);
/// Clicks grouped by frame index.
std::map<int, std::vector<ClickRecord>> read_trace(std::istream& in);

}  // namespace aftergate
