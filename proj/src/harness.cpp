#include "aftergate/harness.hpp"

#include <bit>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "aftergate/format.hpp"
#include "aftergate/parallel.hpp"

#ifndef AFTERGATE_VERSION
#define AFTERGATE_VERSION "unknown"
#endif

namespace aftergate {

namespace fs = std::filesystem;

const char* code_version() { return AFTERGATE_VERSION; }

void SystemConfig::validate() const {
  d0.validate();
  d1.validate();
  eve.validate();
  if (!(optical_transmittance >= 0.0 && optical_transmittance <= 1.0)) {
    throw std::invalid_argument("optical_transmittance must lie in [0, 1]");
  }
  if (gates_per_frame < 1) throw std::invalid_argument("gates_per_frame must be >= 1");
  if (interframe_gap_ns < 0) throw std::invalid_argument("interframe_gap_ns must be >= 0");
  if (alice_mean_photons && !(*alice_mean_photons > 0.0)) {
    throw std::invalid_argument("alice_mean_photons must be positive");
  }
}

SweepSpec SweepSpec::default_axes() {
  SweepSpec s;
  s.frequencies_hz = {0.2e6, 0.5e6, 1e6, 2e6, 5e6, 10e6};
  for (int k = 1; k <= 20; ++k) s.transmittances.push_back(k / 20.0);
  return s;
}

void SweepSpec::validate() const {
  if (frequencies_hz.empty() || transmittances.empty()) {
    throw std::invalid_argument("sweep axes must not be empty");
  }
  for (double f : frequencies_hz) {
    if (!(f > 0.0 && f <= 1e9)) throw std::invalid_argument("gate frequency out of range");
  }
  for (double t : transmittances) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("transmittance must lie in (0, 1]");
  }
  if (frames_per_cell < 1) throw std::invalid_argument("frames_per_cell must be >= 1");
  if (calibration_frames < 1) throw std::invalid_argument("calibration_frames must be >= 1");
}

std::string strategy_name(const std::optional<Strategy>& s) {
  return s ? to_string(*s) : "BASELINE";
}

std::uint64_t cell_seed(std::uint64_t base_seed, double frequency_hz, double transmittance) {
  return derive_key(derive_key(base_seed, std::bit_cast<std::uint64_t>(frequency_hz)),
                    std::bit_cast<std::uint64_t>(transmittance));
}

Scenario make_scenario(const SystemConfig& sys, double frequency_hz, double transmittance,
                       const std::optional<Strategy>& strategy) {
  Scenario sc;
  sc.frame = FrameConfig::from_frequency(frequency_hz);
  sc.frame.gates_per_frame = sys.gates_per_frame;
  sc.frame.interframe_gap_ns = sys.interframe_gap_ns;
  sc.frame.validate();
  sc.channel.transmittance = transmittance;
  sc.channel.alice_mean_photons = sys.alice_mean_photons;
  sc.channel.validate();
  DetectorParams d0 = sys.d0;
  DetectorParams d1 = sys.d1;
  if (strategy) {
    const DeadtimeMode mode = *strategy == Strategy::kDeadtimeRespected
                                  ? DeadtimeMode::kReject
                                  : DeadtimeMode::kAcceptAndExtend;
    d0.deadtime_mode = d1.deadtime_mode = mode;
  }
  sc.bob.d0 = std::make_shared<DetectorModel>(std::move(d0));
  sc.bob.d1 = std::make_shared<DetectorModel>(std::move(d1));
  sc.bob.optical_transmittance = sys.optical_transmittance;
  sc.bob.double_click = sys.double_click;
  sc.bob.validate();
  sc.eve = sys.eve;
  return sc;
}

namespace {

struct FrameTally {
  std::int64_t sifted = 0;
  std::int64_t errors = 0;
  std::int64_t clicks = 0;
  std::int64_t bursts = 0;
  std::int64_t burst_states = 0;
};

}  // namespace

SweepCell run_cell(const SweepSpec& spec, const SystemConfig& sys, double frequency_hz,
                   double transmittance, const SweepOptions& opt, std::size_t cell_index) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepCell cell;
  cell.frequency_hz = frequency_hz;
  cell.transmittance = transmittance;
  cell.seed = cell_seed(spec.base_seed, frequency_hz, transmittance);
  const Scenario sc = make_scenario(sys, frequency_hz, transmittance, spec.strategy);
  const Stream root(cell.seed);

  AttackPlan plan;
  if (spec.strategy) {
    cell.baseline_rate = baseline_rate(sc, root.split(stream_tag::kBaseline),
                                       spec.calibration_frames, opt.threads);
    const ChiCalibration cal =
        plan_attack(cell.baseline_rate, *spec.strategy, sc, root.split(stream_tag::kCalibration),
                    spec.calibration_frames, opt.threads);
    plan = cal.plan;
    cell.chi = plan.chi;
    cell.min_burst = plan.min_burst;
    cell.feasible = cal.feasible;
    cell.calibrated_rate = cal.achieved_rate;
  }

  const auto frames = static_cast<std::size_t>(spec.frames_per_cell);
  const auto traced = static_cast<std::size_t>(opt.trace ? std::max(opt.trace_frames, 0) : 0);
  std::vector<FrameTally> tallies(frames);
  std::vector<std::pair<FrameOutcome, AliceRecord>> traces(std::min(traced, frames));
  const Stream measure = root.split(stream_tag::kMeasurement);
  parallel_for(frames, opt.threads, [&](std::size_t i) {
    FrameTally& t = tallies[i];
    FrameOutcome out;
    AliceRecord alice;
    if (spec.strategy) {
      AttackFrame f = simulate_attack_frame(sc, plan, measure.split(i));
      for (int b : f.schedule.burst_sizes) {
        ++t.bursts;
        t.burst_states += b;
      }
      out = std::move(f.outcome);
      alice = std::move(f.alice);
    } else {
      out = simulate_baseline_frame(sc, measure.split(i), &alice);
    }
    t.sifted = out.sifted_bits;
    t.errors = out.errors;
    t.clicks = static_cast<std::int64_t>(out.clicks.size());
    if (i < traces.size()) traces[i] = {std::move(out), std::move(alice)};
  });

  FrameTally total;
  for (const FrameTally& t : tallies) {
    total.sifted += t.sifted;
    total.errors += t.errors;
    total.clicks += t.clicks;
    total.bursts += t.bursts;
    total.burst_states += t.burst_states;
  }
  cell.qber = make_qber_estimate(total.sifted, total.errors, total.clicks, spec.frames_per_cell);
  if (!spec.strategy) cell.baseline_rate = cell.qber.raw_rate_per_frame;
  cell.mean_burst_length =
      total.bursts > 0 ? static_cast<double>(total.burst_states) / total.bursts : 0.0;
  if (total.sifted > 0) cell.verdict = compare_to_bounds(cell.qber);

  if (!traces.empty()) {
    std::ostream& out = *opt.trace;
    out << "# cell f_hz " << format_double(frequency_hz) << " T " << format_double(transmittance)
        << " seed " << cell.seed << "\n";
    for (std::size_t i = 0; i < traces.size(); ++i) {
      write_trace(out, static_cast<int>(cell_index * traces.size() + i), traces[i].first,
                  traces[i].second);
    }
  }
  cell.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

std::vector<SweepCell> run_sweep(const SweepSpec& spec, const SystemConfig& sys,
                                 const SweepOptions& opt) {
  spec.validate();
  sys.validate();
  if (opt.trace) write_trace_header(*opt.trace);
  const std::size_t total = spec.frequencies_hz.size() * spec.transmittances.size();
  std::vector<SweepCell> cells;
  cells.reserve(total);
  for (double f : spec.frequencies_hz) {
    for (double t : spec.transmittances) {
      cells.push_back(run_cell(spec, sys, f, t, opt, cells.size()));
      if (opt.on_cell) opt.on_cell(cells.back(), cells.size() - 1, total);
    }
  }
  return cells;
}

namespace {

DoubleClickPolicy parse_double_click(const std::string& s) {
  if (s == "random_bit") return DoubleClickPolicy::kRandomBit;
  if (s == "discard") return DoubleClickPolicy::kDiscard;
  throw ConfigError("unknown double_click policy '" + s + "'");
}

std::string to_string(DoubleClickPolicy p) {
  return p == DoubleClickPolicy::kRandomBit ? "random_bit" : "discard";
}

DetectorParams detector_entry(const json& j, const fs::path& base_dir) {
  if (j.is_string()) {
    fs::path p = j.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    return load_detector_params(p);
  }
  return detector_params_from_json(j, base_dir);
}

std::vector<double> number_list(const json& j, const char* key, double factor) {
  std::vector<double> out;
  for (const auto& v : j.at(key)) out.push_back(v.get<double>() * factor);
  return out;
}

}  // namespace

SweepConfig sweep_config_from_json(const json& j, const fs::path& base_dir) {
  SweepConfig cfg;
  SweepSpec& s = cfg.spec;
  SystemConfig& sys = cfg.system;
  try {
    const std::string strategy = j.value("strategy", std::string("BASELINE"));
    if (strategy != "BASELINE" && strategy != "baseline") s.strategy = parse_strategy(strategy);
    if (j.contains("frequencies_hz")) {
      s.frequencies_hz = number_list(j, "frequencies_hz", 1.0);
    } else if (j.contains("frequencies_mhz")) {
      s.frequencies_hz = number_list(j, "frequencies_mhz", 1e6);
    } else {
      s.frequencies_hz = SweepSpec::default_axes().frequencies_hz;
    }
    s.transmittances = j.contains("transmittances") ? number_list(j, "transmittances", 1.0)
                                                     : SweepSpec::default_axes().transmittances;
    s.frames_per_cell = j.value("frames_per_cell", s.frames_per_cell);
    s.calibration_frames = j.value("calibration_frames", s.calibration_frames);
    s.base_seed = j.value("base_seed", s.base_seed);

    const json& js = j.at("system");
    const json& dets = js.at("detectors");
    if (!dets.is_array() || dets.size() != 2) {
      throw ConfigError("system.detectors must list exactly two detectors");
    }
    sys.d0 = detector_entry(dets[0], base_dir);
    sys.d1 = detector_entry(dets[1], base_dir);
    sys.optical_transmittance = js.value("optical_transmittance", sys.optical_transmittance);
    sys.double_click = parse_double_click(js.value("double_click", std::string("random_bit")));
    sys.gates_per_frame = js.value("gates_per_frame", sys.gates_per_frame);
    sys.interframe_gap_ns = js.value("interframe_gap_ns", sys.interframe_gap_ns);
    if (js.contains("alice_mean_photons") && !js.at("alice_mean_photons").is_null()) {
      sys.alice_mean_photons = js.at("alice_mean_photons").get<double>();
    }
    sys.eve = j.contains("eve") ? eve_params_from_json(j.at("eve")) : EveParams{};
    s.validate();
    sys.validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sweep config: ") + e.what());
  }
  return cfg;
}

SweepConfig load_sweep_config(const fs::path& path) {
  const json j = read_json_file(path);
  try {
    return sweep_config_from_json(j, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json make_manifest(const SweepConfig& cfg, const std::vector<SweepCell>& cells) {
  const SweepSpec& s = cfg.spec;
  const SystemConfig& sys = cfg.system;
  json j;
  j["version"] = code_version();
  j["strategy"] = strategy_name(s.strategy);
  j["frequencies_hz"] = s.frequencies_hz;
  j["transmittances"] = s.transmittances;
  j["frames_per_cell"] = s.frames_per_cell;
  j["calibration_frames"] = s.calibration_frames;
  j["base_seed"] = s.base_seed;
  json js;
  js["detectors"] = json::array({to_json(sys.d0), to_json(sys.d1)});
  js["optical_transmittance"] = sys.optical_transmittance;
  js["double_click"] = to_string(sys.double_click);
  js["gates_per_frame"] = sys.gates_per_frame;
  js["interframe_gap_ns"] = sys.interframe_gap_ns;
  js["alice_mean_photons"] =
      sys.alice_mean_photons ? json(*sys.alice_mean_photons) : json(nullptr);
  j["system"] = std::move(js);
  j["eve"] = to_json(sys.eve);
  json jc = json::array();
  for (const SweepCell& c : cells) {
    jc.push_back({{"f_hz", c.frequency_hz}, {"T", c.transmittance}, {"seed", c.seed}});
  }
  j["cells"] = std::move(jc);
  return j;
}

void write_results_table(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "f_hz,T,chi,burst_len,qber,ci_low,ci_high,verdict,seed,"
         "feasible,min_burst,sifted,errors,raw_rate,baseline_rate,wall_time_s\n";
  for (const SweepCell& c : cells) {
    const auto d = [](double v) { return format_double(v); };
    out << d(c.frequency_hz) << ',' << d(c.transmittance) << ',' << d(c.chi) << ','
        << d(c.mean_burst_length) << ',' << d(c.qber.qber) << ',' << d(c.qber.wilson_low) << ','
        << d(c.qber.wilson_high) << ','
        << (c.verdict ? to_string(*c.verdict) : "NO_SIFTED_BITS") << ',' << c.seed << ','
        << (c.feasible ? 1 : 0) << ',' << c.min_burst << ',' << c.qber.sifted_total << ','
        << c.qber.errors_total << ',' << d(c.qber.raw_rate_per_frame) << ','
        << d(c.baseline_rate) << ',' << d(c.wall_time_s) << '\n';
  }
}

void export_results(const SweepConfig& cfg, const std::vector<SweepCell>& cells,
                    const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  const fs::path table = dir / "results.csv";
  const fs::path manifest = dir / "manifest.json";
  {
    std::ofstream out(table);
    if (!out) throw std::runtime_error("cannot write " + table.string());
    write_results_table(out, cells);
    if (!out) throw std::runtime_error("write failed: " + table.string());
  }
  std::ofstream out(manifest);
  if (!out) throw std::runtime_error("cannot write " + manifest.string());
  out << make_manifest(cfg, cells).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + manifest.string());
}

}  // namespace aftergate
