#include "aftergate/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aftergate {

namespace {

constexpr double kResidualBound = 1e-9;

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

// One event's contribution to the union, clamped to a probability.
double contribution(double scale, double kernel) {
  const double c = scale * kernel;
  if (!std::isfinite(c)) {
    throw std::domain_error("non-finite afterpulse contribution");
  }
  return std::clamp(c, 0.0, 1.0);
}

template <typename Kernel>
double union_probability(const DetectorState& state, double dark_prob, TimeNs t_query,
                         Kernel&& kernel) {
  double survive = 1.0 - dark_prob;
  for (const auto& ev : state.events) {
    if (ev.time > t_query) {
      throw std::logic_error("carrier event lies after the query time");
    }
    survive *= 1.0 - contribution(ev.scale, kernel(t_query - ev.time));
  }
  return 1.0 - survive;
}

}  // namespace

void DetectorParams::validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument("detector " + name + ": " + what);
  };
  if (!in_unit(dark_prob)) fail("dark_prob must lie in [0, 1]");
  for (const auto& trap : traps) {
    if (!in_unit(trap.amplitude)) fail("trap amplitude must lie in [0, 1]");
    if (!(trap.lifetime_us > 0.0)) fail("trap lifetime must be positive");
  }
  if (gammas.half_power < 0.0 || gammas.avalanche < 0.0) fail("gamma corrections must be >= 0");
  if (gammas.full_power_applications < 1) fail("full_power_applications must be >= 1");
  if (!in_unit(quantum_efficiency)) fail("quantum_efficiency must lie in [0, 1]");
  if (!(dead_time_us > 0.0)) fail("dead_time must be positive");
  if (!in_unit(deadtime_detection_prob)) fail("deadtime_detection_prob must lie in [0, 1]");
}

TimeNs DetectorParams::dead_time_ns() const {
  return static_cast<TimeNs>(std::llround(dead_time_us * 1000.0));
}

double DetectorParams::trap_kernel(double dt_ns) const {
  return traps[0].amplitude * std::exp(-dt_ns / (traps[0].lifetime_us * 1000.0)) +
         traps[1].amplitude * std::exp(-dt_ns / (traps[1].lifetime_us * 1000.0));
}

TimeNs DetectorParams::prune_horizon_ns() const {
  const double longest = std::max(traps[0].lifetime_us, traps[1].lifetime_us) * 1000.0;
  const double max_scale = std::max({gammas.half_power, gammas.avalanche, 1.0});
  auto horizon = static_cast<TimeNs>(std::ceil(12.0 * longest));
  while (max_scale * trap_kernel(static_cast<double>(horizon)) > kResidualBound) {
    horizon += 100;
  }
  return horizon;
}

double afterpulse_probability(const DetectorState& state, const DetectorParams& params,
                              TimeNs t_query) {
  return union_probability(state, params.dark_prob, t_query, [&](TimeNs dt) {
    return params.trap_kernel(static_cast<double>(dt));
  });
}

DetectorModel::DetectorModel(DetectorParams params) : params_(std::move(params)) {
  params_.validate();
  const TimeNs horizon = params_.prune_horizon_ns();
  kernel_.resize(static_cast<std::size_t>(horizon));
  for (TimeNs dt = 0; dt < horizon; ++dt) {
    kernel_[static_cast<std::size_t>(dt)] = params_.trap_kernel(static_cast<double>(dt));
  }
}

double DetectorModel::afterpulse_probability(const DetectorState& state, TimeNs t_query) const {
  return union_probability(state, params_.dark_prob, t_query,
                           [this](TimeNs dt) { return kernel(dt); });
}

void DetectorModel::register_carriers(DetectorState& state, TimeNs t, CarrierSource source) const {
  if (!state.events.empty() && t < state.events.back().time) {
    throw std::logic_error("carrier events must be registered in time order");
  }
  switch (source) {
    case CarrierSource::kHalfPower:
      state.events.push_back({t, params_.gammas.half_power});
      break;
    case CarrierSource::kFullPower:
      for (int i = 0; i < params_.gammas.full_power_applications; ++i) {
        state.events.push_back({t, 1.0});
      }
      break;
    case CarrierSource::kAvalanche:
      state.events.push_back({t, params_.gammas.avalanche});
      break;
  }
}

bool DetectorModel::process_gate(DetectorState& state, double mean_photons, Stream& rng) const {
  const double p_photon = -std::expm1(-mean_photons * params_.quantum_efficiency);
  const bool photon = rng.uniform() < p_photon;
  return process_gate_with_photon(state, photon, rng.uniform());
}

bool DetectorModel::process_gate_with_photon(DetectorState& state, bool photon,
                                             double afterpulse_u) const {
  if (state.dead_at(state.now)) {
    throw std::logic_error("gate requested during dead time");
  }
  prune(state);
  const bool click = photon || afterpulse_u < afterpulse_probability(state, state.now);
  if (click) {
    register_carriers(state, state.now, CarrierSource::kAvalanche);
    const TimeNs until = state.now + params_.dead_time_ns();
    state.dead_until = std::max(state.dead_until.value_or(until), until);
  }
  return click;
}

bool DetectorModel::process_bright_pulse(DetectorState& state, double power_uw, double delay_ns,
                                         CarrierSource designation, Stream& rng) const {
  if (power_uw < 0.0) {
    throw std::invalid_argument("incident power must be non-negative");
  }
  if (power_uw == 0.0) {
    return false;
  }
  const double p_click = params_.threshold_curve.click_probability(power_uw, delay_ns);
  const double u = rng.uniform();
  const TimeNs t = state.now + static_cast<TimeNs>(std::llround(delay_ns));
  register_carriers(state, t, designation);
  if (!(u < p_click)) {
    return false;
  }
  if (state.dead_at(t)) {
    return handle_deadtime_click(state, t, rng);
  }
  const TimeNs until = t + params_.dead_time_ns();
  state.dead_until = std::max(state.dead_until.value_or(until), until);
  return true;
}

bool DetectorModel::handle_deadtime_click(DetectorState& state, TimeNs t, Stream& rng) const {
  const double u = rng.uniform();
  if (params_.deadtime_mode == DeadtimeMode::kReject) {
    return false;
  }
  if (!(u < params_.deadtime_detection_prob)) {
    return false;
  }
  const TimeNs until = t + params_.dead_time_ns();
  state.dead_until = std::max(state.dead_until.value_or(until), until);
  return true;
}

void DetectorModel::prune(DetectorState& state) const {
  const TimeNs h = horizon();
  auto keep = std::find_if(state.events.begin(), state.events.end(),
                           [&](const CarrierEvent& ev) { return state.now - ev.time < h; });
  state.events.erase(state.events.begin(), keep);
}

}  // namespace aftergate
