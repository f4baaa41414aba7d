#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aftergate/config.hpp"
#include "aftergate/eve.hpp"

namespace aftergate {

/// Everything except the sweep axes: both detectors, the receiver and Eve.
struct SystemConfig {
  DetectorParams d0;
  DetectorParams d1;
  EveParams eve;
  double optical_transmittance = 0.412;
  DoubleClickPolicy double_click = DoubleClickPolicy::kRandomBit;
  int gates_per_frame = 1075;
  TimeNs interframe_gap_ns = 50000;
  std::optional<double> alice_mean_photons;  // unset: equal to T

  void validate() const;
};

struct SweepSpec {
  std::vector<double> frequencies_hz;
  std::vector<double> transmittances;
  int frames_per_cell = 10000;
  int calibration_frames = 1000;
  std::optional<Strategy> strategy;  // unset: honest baseline
  std::uint64_t base_seed = 1;

  /// f in {0.2, 0.5, 1, 2, 5, 10} MHz, T in 0.05..1.0 step 0.05.
  static SweepSpec default_axes();
  void validate() const;
};

std::string strategy_name(const std::optional<Strategy>& s);  // "BASELINE" when unset

struct SweepCell {
  double frequency_hz = 0.0;
  double transmittance = 0.0;
  std::uint64_t seed = 0;
  double chi = 0.0;
  int min_burst = 0;
  double mean_burst_length = 0.0;
  bool feasible = true;
  double baseline_rate = 0.0;    // calibration estimate, clicks per frame
  double calibrated_rate = 0.0;  // attacked rate at the chosen chi
  QberEstimate qber;
  std::optional<Verdict> verdict;  // unset when no bit was sifted
  double wall_time_s = 0.0;
};

/// Cell seed: a hash of the base seed and the exact bit patterns of f and T,
/// so any cell can be rerun on its own.
std::uint64_t cell_seed(std::uint64_t base_seed, double frequency_hz, double transmittance);

/// Receiver, channel and frame for one grid point. An attack strategy fixes
/// the receiver's dead-time mode: deadtime-respected runs against a receiver
/// that rejects clicks in the dead time, deadtime-exploit against one that
/// accepts them.
Scenario make_scenario(const SystemConfig& sys, double frequency_hz, double transmittance,
                       const std::optional<Strategy>& strategy);

struct SweepOptions {
  int threads = 1;
  std::ostream* trace = nullptr;  // first `trace_frames` frames of every cell
  int trace_frames = 0;
  std::function<void(const SweepCell&, std::size_t index, std::size_t total)> on_cell;
};

SweepCell run_cell(const SweepSpec& spec, const SystemConfig& sys, double frequency_hz,
                   double transmittance, const SweepOptions& opt = {},
                   std::size_t cell_index = 0);

/// Cells in (frequency, transmittance) row-major order.
std::vector<SweepCell> run_sweep(const SweepSpec& spec, const SystemConfig& sys,
                                 const SweepOptions& opt = {});

/// Sweep config: axes, strategy, frame counts, seed, `system` and `eve`.
/// Detectors are paths (relative to the config file) or inline objects.
struct SweepConfig {
  SweepSpec spec;
  SystemConfig system;
};

SweepConfig sweep_config_from_json(const json& j, const std::filesystem::path& base_dir);
SweepConfig load_sweep_config(const std::filesystem::path& path);

/// Fully resolved config (detectors inline) plus code version and cell seeds.
/// Loading it back with sweep_config_from_json reproduces the run.
json make_manifest(const SweepConfig& cfg, const std::vector<SweepCell>& cells);

void write_results_table(std::ostream& out, const std::vector<SweepCell>& cells);

/// Writes results.csv and manifest.json into `dir`, creating it if needed.
/// Throws std::runtime_error naming the path on I/O failure.
void export_results(const SweepConfig& cfg, const std::vector<SweepCell>& cells,
                    const std::filesystem::path& dir);

const char* code_version();

}  // namespace aftergate
