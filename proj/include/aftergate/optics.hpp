#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "aftergate/random.hpp"

namespace aftergate {

/// Measurement basis. Basis A encodes bits as phases {0, pi}; basis B as
/// {pi/2, 3pi/2}.
enum class Basis : std::uint8_t { kA = 0, kB = 1 };

inline int to_int(Basis b) { return static_cast<int>(b); }
inline Basis basis_from_bit(int bit) { return bit ? Basis::kB : Basis::kA; }

struct ThresholdSample {
  double delay_ns = 0.0;
  double p0_uw = 0.0;    // largest power that never clicks
  double p100_uw = 0.0;  // smallest power that always clicks
};

/// Linear-mode click thresholds of one detector as a function of the delay
/// after the gate's leading edge. Linearly interpolated between samples.
class ThresholdCurve {
 public:
  ThresholdCurve() = default;
  explicit ThresholdCurve(std::vector<ThresholdSample> samples);

  bool empty() const { return samples_.empty(); }
  bool contains(double delay_ns) const;
  double min_delay() const;
  double max_delay() const;

  /// Interpolated thresholds; throws std::out_of_range outside the samples.
  ThresholdSample at(double delay_ns) const;

  /// 0 at or below P_0%, 1 at or above P_100%, linear ramp in between.
  double click_probability(double power_uw, double delay_ns) const;

  ThresholdCurve scaled(double factor) const;

  const std::vector<ThresholdSample>& samples() const { return samples_; }

 private:
  std::vector<ThresholdSample> samples_;
};

/// Both detectors' curves as loaded from one threshold table.
struct ThresholdTable {
  ThresholdCurve d0;
  ThresholdCurve d1;
};

/// Reads `delay_ns p0_d0 p100_d0 p0_d1 p100_d1` rows. '#' starts a comment.
ThresholdTable load_threshold_table(const std::filesystem::path& path);

/// Attack-feasibility ratio: min of the two never-click powers over max of
/// the two always-click powers at delay t.
double theta(const ThresholdCurve& d0, const ThresholdCurve& d1, double delay_ns);
bool attack_feasible(const ThresholdCurve& d0, const ThresholdCurve& d1, double delay_ns);

struct FeasibleWindow {
  double begin_ns = 0.0;
  double end_ns = 0.0;
  double best_delay_ns = 0.0;
  double best_theta = 0.0;
};

/// Contiguous run of sampled delays with theta > 0.5 around the maximum.
/// Only delays sampled by both curves are considered.
std::optional<FeasibleWindow> feasible_window(const ThresholdCurve& d0,
                                              const ThresholdCurve& d1);

/// Relative phase in quarter turns (0, pi/2, pi, 3pi/2 -> 0..3).
struct PhaseSetting {
  int alice_quarter = 0;  // bit * 2 + basis
  int bob_quarter = 0;    // basis

  static PhaseSetting from(Basis alice_basis, int alice_bit, Basis bob_basis);
  int difference() const { return ((alice_quarter - bob_quarter) % 4 + 4) % 4; }
  bool conclusive() const { return difference() % 2 == 0; }
};

struct FakedState {
  double peak_power_uw = 0.0;
  double delay_after_gate_ns = 0.0;
  Basis basis = Basis::kA;
  int bit_value = 0;
  int target_gate = 0;
};

struct PowerSplit {
  double d0_uw = 0.0;
  double d1_uw = 0.0;
};

/// Matched bases put all power on the detector named by the bit; otherwise
/// the interferometer splits it evenly.
PowerSplit route_faked_state(const FakedState& fs, Basis bob_basis);

enum class Outcome : std::uint8_t { kNone = 0, kD0 = 1, kD1 = 2, kDouble = 3 };

/// Ideal-visibility interferometer followed by a Poissonian detection with
/// mean mu * transmittance * efficiency. Conclusive phase differences select
/// a detector deterministically; the others pick one uniformly.
Outcome quantum_detect(double mean_photons, const PhaseSetting& phase, double efficiency,
                       double optics_transmittance, Stream& rng);

}  // namespace aftergate
