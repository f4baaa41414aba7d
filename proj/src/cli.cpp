#include "aftergate/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

#include "aftergate/calibration.hpp"
#include "aftergate/config.hpp"
#include "aftergate/harness.hpp"

#ifndef AFTERGATE_CONFIG_DIR
#define AFTERGATE_CONFIG_DIR "config"
#endif

namespace aftergate {

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct Globals {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  bool fast = false;
  bool seed_given = false;
};

json to_json(const FitResult& r) {
  json dets = json::array();
  for (const DecayParams& p : r.params) {
    dets.push_back({{"dark_prob", p.dark_prob},
                    {"traps",
                     {{{"amplitude", p.traps[0].amplitude}, {"lifetime_us", p.traps[0].lifetime_us}},
                      {{"amplitude", p.traps[1].amplitude}, {"lifetime_us", p.traps[1].lifetime_us}}}}});
  }
  return {{"detectors", dets},
          {"residual", r.residual},
          {"initial_residual", r.initial_residual},
          {"iterations", r.iterations},
          {"status", r.converged ? "CONVERGED" : "NOT_CONVERGED"}};
}

void print_cell(const SweepCell& c, std::size_t index, std::size_t total) {
  std::fprintf(stderr, "[%zu/%zu] f=%.4g MHz T=%.4g chi=%.2f burst=%.2f qber=%.4f [%.4f, %.4f] %s%s (%.1f s)\n",
               index + 1, total, c.frequency_hz / 1e6, c.transmittance, c.chi,
               c.mean_burst_length, c.qber.qber, c.qber.wilson_low, c.qber.wilson_high,
               c.verdict ? to_string(*c.verdict).c_str() : "NO_SIFTED_BITS",
               c.feasible ? "" : " infeasible", c.wall_time_s);
}

int run_sweep_command(SweepConfig cfg, const Globals& g, const std::string& trace_path,
                      int trace_frames) {
  if (g.seed_given) cfg.spec.base_seed = g.seed;
  if (g.fast) cfg.spec.frames_per_cell = std::min(cfg.spec.frames_per_cell, 1000);
  SweepOptions opt;
  opt.threads = g.threads;
  opt.on_cell = print_cell;
  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw std::runtime_error("cannot write trace " + trace_path);
    opt.trace = &trace;
    opt.trace_frames = trace_frames;
  }
  const auto cells = run_sweep(cfg.spec, cfg.system, opt);
  write_results_table(std::cout, cells);
  if (!g.out.empty()) {
    export_results(cfg, cells, g.out);
    std::fprintf(stderr, "wrote %s/results.csv and %s/manifest.json\n", g.out.c_str(),
                 g.out.c_str());
  }
  if (cfg.spec.strategy &&
      std::none_of(cells.begin(), cells.end(), [](const SweepCell& c) { return c.feasible; })) {
    std::fprintf(stderr, "no cell admits a feasible attack\n");
    return kExitInfeasible;
  }
  return 0;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"After-gate faked-state attack simulator for gated QKD receivers", "aftergate"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", code_version());

  Globals g;
  app.add_option("--seed", g.seed, "Base seed (64-bit)")
      ->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (sweep, baseline) or file (fit, curve)");
  app.add_flag("--fast", g.fast, "Cap frames per cell at 10^3");

  const std::string config_dir = AFTERGATE_CONFIG_DIR;

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run an attack or baseline sweep from a config file");
  std::string sweep_config;
  std::string sweep_strategy;
  std::string trace_path;
  int trace_frames = 10;
  sweep->add_option("--config", sweep_config, "Sweep config file")->required();
  sweep->add_option("--strategy", sweep_strategy,
                    "Override: DEADTIME_RESPECTED, DEADTIME_EXPLOIT or BASELINE");
  sweep->add_option("--trace", trace_path, "Write click traces of the first frames per cell");
  sweep->add_option("--trace-frames", trace_frames, "Frames traced per cell")
      ->check(CLI::NonNegativeNumber);

  // baseline
  auto* base = app.add_subcommand("baseline", "Honest-system QBER over the config's axes");
  std::string base_config = config_dir + "/sweep_default.cfg";
  std::vector<double> base_f_mhz;
  std::vector<double> base_t;
  base->add_option("--config", base_config, "Sweep config file (axes and system)");
  base->add_option("--frequency-mhz", base_f_mhz, "Override gate frequencies (MHz)");
  base->add_option("--transmittance", base_t, "Override transmittances");
  base->add_option("--trace", trace_path, "Write click traces of the first frames per cell");
  base->add_option("--trace-frames", trace_frames, "Frames traced per cell")
      ->check(CLI::NonNegativeNumber);

  // theta
  auto* th = app.add_subcommand("theta", "Attack feasibility from a threshold table");
  std::string curves;
  std::vector<double> delays;
  th->add_option("--curves", curves, "Threshold table")->required();
  th->add_option("--delay", delays, "Also report these delays (ns)");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit trap decay parameters to a cumulative afterpulse curve");
  std::string data;
  std::string d0_cfg = config_dir + "/clavis2_d0.cfg";
  std::string d1_cfg = config_dir + "/clavis2_d1.cfg";
  FitOptions fit_opt;
  TimeNs period = 200;
  fit->add_option("--data", data, "Curve file: gate probability [first_d0 first_d1]")->required();
  fit->add_option("--d0", d0_cfg, "Detector config for the initial guess of D0");
  fit->add_option("--d1", d1_cfg, "Detector config for the initial guess of D1");
  fit->add_option("--budget", fit_opt.budget, "Objective evaluations");
  fit->add_option("--trials", fit_opt.trials, "Monte Carlo trials per evaluation");
  fit->add_option("--period-ns", period, "Gate period of the curve");

  // monitor
  auto* mon = app.add_subcommand("monitor", "Scan a click trace for sub-dead-time spacing");
  std::string mon_trace;
  double dead_us = 10.0;
  mon->add_option("--trace", mon_trace, "Trace file")->required();
  mon->add_option("--dead-time-us", dead_us, "Dead time")->check(CLI::PositiveNumber);

  // curve
  auto* cur = app.add_subcommand("curve", "Simulate a cumulative afterpulse curve");
  CumulativeOptions cur_opt;
  cur_opt.trials = 1000000;
  cur->add_option("--d0", d0_cfg, "Detector config D0");
  cur->add_option("--d1", d1_cfg, "Detector config D1");
  cur->add_option("--trials", cur_opt.trials, "Trials");
  cur->add_option("--gates", cur_opt.gates, "Gates after the pulse");
  cur->add_option("--power-uw", cur_opt.pulse_power_uw, "Pulse power per detector");
  cur->add_option("--period-ns", cur_opt.gate_period_ns, "Gate period");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }

  try {
    if (*sweep) {
      SweepConfig cfg = load_sweep_config(sweep_config);
      if (!sweep_strategy.empty()) {
        cfg.spec.strategy.reset();
        if (sweep_strategy != "BASELINE") cfg.spec.strategy = parse_strategy(sweep_strategy);
      }
      return run_sweep_command(std::move(cfg), g, trace_path, trace_frames);
    }
    if (*base) {
      SweepConfig cfg = load_sweep_config(base_config);
      cfg.spec.strategy.reset();
      if (!base_f_mhz.empty()) {
        cfg.spec.frequencies_hz.clear();
        for (double f : base_f_mhz) cfg.spec.frequencies_hz.push_back(f * 1e6);
      }
      if (!base_t.empty()) cfg.spec.transmittances = base_t;
      cfg.spec.validate();
      return run_sweep_command(std::move(cfg), g, trace_path, trace_frames);
    }
    if (*th) {
      ThresholdTable table;
      try {
        table = load_threshold_table(curves);
      } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
      }
      const auto w = feasible_window(table.d0, table.d1);
      if (w) {
        std::cout << "feasible window [" << fmt(w->begin_ns) << ", " << fmt(w->end_ns)
                  << "] ns, best delay " << fmt(w->best_delay_ns) << " ns (theta "
                  << fmt(w->best_theta) << ")\n";
      } else {
        std::cout << "no feasible delay (theta <= 0.5 everywhere)\n";
      }
      for (double d : delays) {
        std::cout << "delay " << fmt(d) << " ns: theta " << fmt(theta(table.d0, table.d1, d))
                  << (attack_feasible(table.d0, table.d1, d) ? " feasible\n" : " not feasible\n");
      }
      return 0;
    }
    if (*fit) {
      CumulativeCurve measured;
      try {
        measured = load_cumulative_curve(data, period);
      } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
      }
      const DecayPair init{DecayParams::from(load_detector_params(d0_cfg)),
                           DecayParams::from(load_detector_params(d1_cfg))};
      const FitResult r = fit_decay_params(measured, init, fit_opt, g.seed);
      const std::string report = to_json(r).dump(2);
      std::cout << report << '\n';
      if (!g.out.empty()) {
        std::ofstream out(g.out);
        if (!out) throw std::runtime_error("cannot write " + g.out);
        out << report << '\n';
        const std::string curve_path = g.out + ".curve.dat";
        std::ofstream cf(curve_path);
        if (!cf) throw std::runtime_error("cannot write " + curve_path);
        write_cumulative_curve(cf, r.best_curve);
      }
      return 0;
    }
    if (*mon) {
      std::ifstream in(mon_trace);
      if (!in) throw ConfigError("cannot open trace " + mon_trace);
      const auto frames = read_trace(in);
      std::size_t flagged = 0;
      std::size_t total = 0;
      for (const auto& [frame, clicks] : frames) {
        const auto anomalies = monitor_click_spacing(clicks, dead_us);
        if (!anomalies.empty()) ++flagged;
        total += anomalies.size();
        for (const auto& a : anomalies) {
          std::cout << "frame " << frame << ": gates " << a.first_gate << " -> " << a.second_gate
                    << " spaced " << a.spacing_ns << " ns\n";
        }
      }
      std::cout << "frames with anomalies: " << flagged << "/" << frames.size()
                << ", anomalies: " << total << '\n';
      return 0;
    }
    if (*cur) {
      cur_opt.threads = g.threads;
      const CumulativeCurve c = simulate_cumulative(load_detector_params(d0_cfg),
                                                    load_detector_params(d1_cfg), cur_opt, g.seed);
      if (g.out.empty()) {
        write_cumulative_curve(std::cout, c);
      } else {
        std::ofstream out(g.out);
        if (!out) throw std::runtime_error("cannot write " + g.out);
        write_cumulative_curve(out, c);
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

}  // namespace aftergate
