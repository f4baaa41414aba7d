#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "aftergate/detector.hpp"
#include "aftergate/eve.hpp"

namespace aftergate {

using json = nlohmann::json;

/// Thrown for any malformed or unreadable configuration. Carries the path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::filesystem::path& path);

DeadtimeMode parse_deadtime_mode(const std::string& s);
std::string to_string(DeadtimeMode m);
Strategy parse_strategy(const std::string& s);

/// Detector parameter set. The threshold curve is either inline
/// ("threshold_curve": [[delay, p0, p100], ...]) or a column pair of a
/// threshold table ("threshold_file" + "threshold_detector": 0 | 1), with
/// relative paths resolved against `base_dir`.
DetectorParams detector_params_from_json(const json& j, const std::filesystem::path& base_dir);
DetectorParams load_detector_params(const std::filesystem::path& path);

/// Inverse of detector_params_from_json; the curve is always written inline.
json to_json(const DetectorParams& p);

EveParams eve_params_from_json(const json& j);
json to_json(const EveParams& e);

}  // namespace aftergate
