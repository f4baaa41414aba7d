#include "aftergate/config.hpp"

#include <fstream>

namespace aftergate {

namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

DeadtimeMode parse_deadtime_mode(const std::string& s) {
  if (s == "reject") return DeadtimeMode::kReject;
  if (s == "accept_and_extend") return DeadtimeMode::kAcceptAndExtend;
  throw ConfigError("unknown deadtime_mode '" + s + "'");
}

std::string to_string(DeadtimeMode m) {
  return m == DeadtimeMode::kReject ? "reject" : "accept_and_extend";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "DEADTIME_RESPECTED" || s == "deadtime_respected") return Strategy::kDeadtimeRespected;
  if (s == "DEADTIME_EXPLOIT" || s == "deadtime_exploit") return Strategy::kDeadtimeExploit;
  throw ConfigError("unknown strategy '" + s + "'");
}

DetectorParams detector_params_from_json(const json& j, const fs::path& base_dir) {
  DetectorParams p;
  try {
    p.name = j.value("name", std::string("detector"));
    p.dark_prob = j.at("dark_prob").get<double>();
    const auto& traps = j.at("traps");
    if (!traps.is_array() || traps.size() != 2) {
      throw ConfigError("detector needs exactly two trap levels");
    }
    for (std::size_t i = 0; i < 2; ++i) {
      p.traps[i].amplitude = traps[i].at("amplitude").get<double>();
      p.traps[i].lifetime_us = traps[i].at("lifetime_us").get<double>();
    }
    if (j.contains("gamma")) {
      const auto& g = j.at("gamma");
      p.gammas.half_power = g.value("half_power", 1.0);
      p.gammas.full_power_applications = g.value("full_power_applications", 2);
      p.gammas.avalanche = g.value("avalanche", 1.0);
    }
    p.quantum_efficiency = j.value("quantum_efficiency", p.quantum_efficiency);
    p.dead_time_us = j.value("dead_time_us", p.dead_time_us);
    p.deadtime_mode = parse_deadtime_mode(j.value("deadtime_mode", std::string("reject")));
    p.deadtime_detection_prob = j.value("deadtime_detection_prob", p.deadtime_detection_prob);
    if (j.contains("threshold_curve")) {
      std::vector<ThresholdSample> samples;
      for (const auto& row : j.at("threshold_curve")) {
        samples.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                           row.at(2).get<double>()});
      }
      p.threshold_curve = ThresholdCurve(std::move(samples));
    } else if (j.contains("threshold_file")) {
      fs::path file = j.at("threshold_file").get<std::string>();
      if (file.is_relative()) file = base_dir / file;
      const ThresholdTable table = load_threshold_table(file);
      p.threshold_curve = j.value("threshold_detector", 0) == 0 ? table.d0 : table.d1;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

DetectorParams load_detector_params(const fs::path& path) {
  try {
    return detector_params_from_json(read_json_file(path), path.parent_path());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + what);
  }
}

json to_json(const DetectorParams& p) {
  json j;
  j["name"] = p.name;
  j["dark_prob"] = p.dark_prob;
  j["traps"] = json::array();
  for (const auto& t : p.traps) {
    j["traps"].push_back({{"amplitude", t.amplitude}, {"lifetime_us", t.lifetime_us}});
  }
  j["gamma"] = {{"half_power", p.gammas.half_power},
                {"full_power_applications", p.gammas.full_power_applications},
                {"avalanche", p.gammas.avalanche}};
  j["quantum_efficiency"] = p.quantum_efficiency;
  j["dead_time_us"] = p.dead_time_us;
  j["deadtime_mode"] = to_string(p.deadtime_mode);
  j["deadtime_detection_prob"] = p.deadtime_detection_prob;
  json curve = json::array();
  for (const auto& s : p.threshold_curve.samples()) {
    curve.push_back({s.delay_ns, s.p0_uw, s.p100_uw});
  }
  j["threshold_curve"] = std::move(curve);
  return j;
}

EveParams eve_params_from_json(const json& j) {
  EveParams e;
  try {
    e.detector_efficiency = j.value("detector_efficiency", e.detector_efficiency);
    e.dark_prob = j.value("dark_prob", e.dark_prob);
    e.memory_depth = j.value("memory_depth", e.memory_depth);
    e.full_power_uw = j.value("full_power_uw", e.full_power_uw);
    e.pulse_delay_ns = j.value("pulse_delay_ns", e.pulse_delay_ns);
    e.validate();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("eve config: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string("eve config: ") + ex.what());
  }
  return e;
}

json to_json(const EveParams& e) {
  return {{"detector_efficiency", e.detector_efficiency},
          {"dark_prob", e.dark_prob},
          {"memory_depth", e.memory_depth},
          {"full_power_uw", e.full_power_uw},
          {"pulse_delay_ns", e.pulse_delay_ns}};
}

}  // namespace aftergate
