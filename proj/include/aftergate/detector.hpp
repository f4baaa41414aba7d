#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aftergate/optics.hpp"
#include "aftergate/random.hpp"

namespace aftergate {

/// Absolute simulation time in integer nanoseconds.
using TimeNs = std::int64_t;

enum class DeadtimeMode : std::uint8_t { kReject, kAcceptAndExtend };

enum class CarrierSource : std::uint8_t { kHalfPower, kFullPower, kAvalanche };

struct TrapLevel {
  double amplitude = 0.0;    // A_i, probability amplitude
  double lifetime_us = 1.0;  // tau_i
};

struct GammaTable {
  double half_power = 1.0;
  int full_power_applications = 2;  // each applied with scale 1
  double avalanche = 1.0;
};

struct DetectorParams {
  std::string name;
  double dark_prob = 0.0;
  std::array<TrapLevel, 2> traps{};
  GammaTable gammas;
  double quantum_efficiency = 0.1;
  double dead_time_us = 10.0;
  ThresholdCurve threshold_curve;
  DeadtimeMode deadtime_mode = DeadtimeMode::kReject;
  double deadtime_detection_prob = 0.99985;

  /// Throws std::invalid_argument when a field is out of its domain.
  void validate() const;

  TimeNs dead_time_ns() const;

  /// Sum over traps of A_i * exp(-dt / tau_i), dt in ns.
  double trap_kernel(double dt_ns) const;

  /// Event age beyond which a carrier event is dropped. At least 12 times
  /// the longest lifetime, extended until the largest-scale event's residual
  /// contribution is below 1e-9.
  TimeNs prune_horizon_ns() const;
};

struct CarrierEvent {
  TimeNs time = 0;
  double scale = 1.0;
};

struct DetectorState {
  std::vector<CarrierEvent> events;
  std::optional<TimeNs> dead_until;
  TimeNs now = 0;

  bool dead_at(TimeNs t) const { return dead_until && t < *dead_until; }
};

/// Exact union of the dark floor and every logged carrier event, evaluated
/// directly with std::exp (no table, no pruning cutoff).
double afterpulse_probability(const DetectorState& state, const DetectorParams& params,
                              TimeNs t_query);

/// Immutable per-detector model: parameters plus a precomputed trap kernel
/// tabulated at every integer nanosecond up to the prune horizon. Shared
/// read-only between frames and threads.
class DetectorModel {
 public:
  explicit DetectorModel(DetectorParams params);

  const DetectorParams& params() const { return params_; }
  TimeNs horizon() const { return static_cast<TimeNs>(kernel_.size()); }

  double kernel(TimeNs dt) const {
    return dt < static_cast<TimeNs>(kernel_.size()) ? kernel_[static_cast<std::size_t>(dt)] : 0.0;
  }

  /// Same union as the free function, using the table. Events older than the
  /// horizon contribute nothing.
  double afterpulse_probability(const DetectorState& state, TimeNs t_query) const;

  void register_carriers(DetectorState& state, TimeNs t, CarrierSource source) const;

  /// Geiger-mode gate at state.now. Returns whether the detector clicked; on a
  /// click registers avalanche carriers and starts the dead time. Throws
  /// std::logic_error when called inside the dead time.
  bool process_gate(DetectorState& state, double mean_photons, Stream& rng) const;

  /// Same as process_gate, with the photon-detection decision already made by
  /// the caller (the receiver decides which detector a photon reaches).
  bool process_gate_with_photon(DetectorState& state, bool photon, double afterpulse_u) const;

  /// Linear-mode bright pulse arriving `delay_ns` after the gate at
  /// state.now. Carriers of the given designation are registered whether or
  /// not it clicks. Inside the dead time the deadtime mode decides.
  bool process_bright_pulse(DetectorState& state, double power_uw, double delay_ns,
                            CarrierSource designation, Stream& rng) const;

  /// A click-level bright pulse at time t inside the dead time.
  bool handle_deadtime_click(DetectorState& state, TimeNs t, Stream& rng) const;

  /// Drops events older than the horizon relative to state.now.
  void prune(DetectorState& state) const;

 private:
  DetectorParams params_;
  std::vector<double> kernel_;
};

using DetectorModelPtr = std::shared_ptr<const DetectorModel>;

}  // namespace aftergate
