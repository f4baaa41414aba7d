#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "aftergate/detector.hpp"

namespace aftergate {

struct CumulativePoint {
  int gate = 0;        // 1..K
  double either = 0.0;  // P(first click at or before this gate)
  // Detector-resolved variants: P(first click at or before this gate and the
  // given detector fired in that gate). Both present or both absent.
  std::optional<double> first_d0;
  std::optional<double> first_d1;
};

struct CumulativeCurve {
  std::vector<CumulativePoint> points;
  std::int64_t trials = 0;
  TimeNs gate_period_ns = 200;

  bool resolved() const;
  /// Throws std::invalid_argument unless gates are 1..K in order and every
  /// column is non-decreasing within [0, 1].
  void validate() const;
};

struct CumulativeOptions {
  double pulse_power_uw = 287.5;
  double pulse_delay_ns = 7.75;  // only used to check the no-click precondition
  int gates = 50;
  TimeNs gate_period_ns = 200;
  std::int64_t trials = 100000;
  int threads = 1;
};

/// Monte Carlo through DetectorModel: half-power carriers on both detectors
/// at t = 0, then gates at k * period for k = 1..K until the first click.
/// Throws std::invalid_argument when the pulse could click either detector.
CumulativeCurve simulate_cumulative(const DetectorParams& d0, const DetectorParams& d1,
                                    const CumulativeOptions& opt, std::uint64_t seed);

struct DecayParams {
  double dark_prob = 0.0;
  std::array<TrapLevel, 2> traps{};

  static DecayParams from(const DetectorParams& p);
  DetectorParams apply_to(DetectorParams base) const;
};

using DecayPair = std::array<DecayParams, 2>;

/// Per-gate click probabilities of one detector after a single carrier event
/// of scale `gamma` at t = 0, for gates 1..K.
std::vector<double> gate_hazards(const DecayParams& p, double gamma, int gates,
                                 TimeNs gate_period_ns);

/// Exact cumulative curve for the same experiment, from the gate hazards.
CumulativeCurve analytic_cumulative(const DecayPair& params, double gamma, int gates,
                                    TimeNs gate_period_ns);

/// Fast first-click sampler with frozen random numbers. Each trial keeps one
/// stratified draw; its first-click gate follows by inverse transform on the
/// cumulative hazard, so every evaluation reuses the same draws. The
/// detector-resolved columns use the conditional share of each detector
/// given the first-click gate.
class FirstClickSampler {
 public:
  FirstClickSampler(std::int64_t trials, std::uint64_t seed);
  CumulativeCurve sample(const DecayPair& params, double gamma, int gates,
                         TimeNs gate_period_ns) const;

 private:
  double fraction_below(double cdf) const;

  std::vector<double> draws_;  // sorted
};

struct FitOptions {
  int budget = 2000;  // objective evaluations
  std::int64_t trials = 100000;
  double gamma = 1.0;  // carrier scale of the pulse
};

struct FitResult {
  DecayPair params{};
  double residual = 0.0;
  double initial_residual = 0.0;
  int iterations = 0;  // objective evaluations
  bool converged = false;
  CumulativeCurve best_curve;
};

/// Sum of squared differences over every column present in `measured`.
double curve_distance(const CumulativeCurve& simulated, const CumulativeCurve& measured);

/// Nelder-Mead least squares on log dark probabilities, logit amplitudes and
/// log lifetimes, restarted around the best vertex until the budget runs out
/// or a restart stops improving. Lifetimes are returned sorted, tau_1 < tau_2.
FitResult fit_decay_params(const CumulativeCurve& measured, const DecayPair& initial_guess,
                           const FitOptions& opt, std::uint64_t seed);

/// Whitespace-separated `gate probability [first_d0 first_d1]`, '#' comments.
CumulativeCurve load_cumulative_curve(const std::filesystem::path& path,
                                      TimeNs gate_period_ns = 200);
void write_cumulative_curve(std::ostream& out, const CumulativeCurve& curve);

}  // namespace aftergate
