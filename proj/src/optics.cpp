#include "aftergate/optics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace aftergate {

ThresholdCurve::ThresholdCurve(std::vector<ThresholdSample> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty()) {
    throw std::invalid_argument("threshold curve needs at least one sample");
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!(s.p0_uw > 0.0) || !(s.p0_uw <= s.p100_uw)) {
      throw std::invalid_argument("threshold sample at " + std::to_string(s.delay_ns) +
                                  " ns violates 0 < p0 <= p100");
    }
    if (i > 0 && !(s.delay_ns > samples_[i - 1].delay_ns)) {
      throw std::invalid_argument("threshold delays must be strictly increasing");
    }
  }
}

bool ThresholdCurve::contains(double delay_ns) const {
  return !samples_.empty() && delay_ns >= samples_.front().delay_ns &&
         delay_ns <= samples_.back().delay_ns;
}

double ThresholdCurve::min_delay() const { return samples_.front().delay_ns; }
double ThresholdCurve::max_delay() const { return samples_.back().delay_ns; }

ThresholdSample ThresholdCurve::at(double delay_ns) const {
  if (!contains(delay_ns)) {
    throw std::out_of_range("delay " + std::to_string(delay_ns) +
                            " ns is outside the threshold curve's sampled range");
  }
  auto hi = std::lower_bound(
      samples_.begin(), samples_.end(), delay_ns,
      [](const ThresholdSample& s, double d) { return s.delay_ns < d; });
  if (hi->delay_ns == delay_ns) {
    return *hi;
  }
  auto lo = std::prev(hi);
  const double w = (delay_ns - lo->delay_ns) / (hi->delay_ns - lo->delay_ns);
  return {delay_ns, lo->p0_uw + w * (hi->p0_uw - lo->p0_uw),
          lo->p100_uw + w * (hi->p100_uw - lo->p100_uw)};
}

double ThresholdCurve::click_probability(double power_uw, double delay_ns) const {
  const ThresholdSample s = at(delay_ns);
  if (power_uw <= s.p0_uw) {
    return 0.0;
  }
  if (power_uw >= s.p100_uw) {
    return 1.0;
  }
  return (power_uw - s.p0_uw) / (s.p100_uw - s.p0_uw);
}

ThresholdCurve ThresholdCurve::scaled(double factor) const {
  std::vector<ThresholdSample> out = samples_;
  for (auto& s : out) {
    s.p0_uw *= factor;
    s.p100_uw *= factor;
  }
  return ThresholdCurve(std::move(out));
}

ThresholdTable load_threshold_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open threshold table " + path.string());
  }
  std::vector<ThresholdSample> d0;
  std::vector<ThresholdSample> d1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    double delay = 0, p0a = 0, p100a = 0, p0b = 0, p100b = 0;
    if (!(fields >> delay)) {
      continue;
    }
    if (!(fields >> p0a >> p100a >> p0b >> p100b)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 5 columns");
    }
    d0.push_back({delay, p0a, p100a});
    d1.push_back({delay, p0b, p100b});
  }
  try {
    return {ThresholdCurve(std::move(d0)), ThresholdCurve(std::move(d1))};
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

double theta(const ThresholdCurve& d0, const ThresholdCurve& d1, double delay_ns) {
  const ThresholdSample a = d0.at(delay_ns);
  const ThresholdSample b = d1.at(delay_ns);
  return std::min(a.p0_uw, b.p0_uw) / std::max(a.p100_uw, b.p100_uw);
}

bool attack_feasible(const ThresholdCurve& d0, const ThresholdCurve& d1, double delay_ns) {
  return theta(d0, d1, delay_ns) > 0.5;
}

std::optional<FeasibleWindow> feasible_window(const ThresholdCurve& d0,
                                              const ThresholdCurve& d1) {
  std::vector<double> delays;
  for (const auto& s : d0.samples()) {
    if (d1.contains(s.delay_ns)) {
      delays.push_back(s.delay_ns);
    }
  }
  if (delays.empty()) {
    return std::nullopt;
  }
  std::vector<double> ratios;
  ratios.reserve(delays.size());
  for (double d : delays) {
    ratios.push_back(theta(d0, d1, d));
  }
  const auto best = static_cast<std::size_t>(
      std::max_element(ratios.begin(), ratios.end()) - ratios.begin());
  if (!(ratios[best] > 0.5)) {
    return std::nullopt;
  }
  std::size_t lo = best;
  std::size_t hi = best;
  while (lo > 0 && ratios[lo - 1] > 0.5) {
    --lo;
  }
  while (hi + 1 < ratios.size() && ratios[hi + 1] > 0.5) {
    ++hi;
  }
  return FeasibleWindow{delays[lo], delays[hi], delays[best], ratios[best]};
}

PhaseSetting PhaseSetting::from(Basis alice_basis, int alice_bit, Basis bob_basis) {
  return {alice_bit * 2 + to_int(alice_basis), to_int(bob_basis)};
}

PowerSplit route_faked_state(const FakedState& fs, Basis bob_basis) {
  if (fs.basis == bob_basis) {
    return fs.bit_value == 0 ? PowerSplit{fs.peak_power_uw, 0.0}
                             : PowerSplit{0.0, fs.peak_power_uw};
  }
  return {fs.peak_power_uw / 2.0, fs.peak_power_uw / 2.0};
}

Outcome quantum_detect(double mean_photons, const PhaseSetting& phase, double efficiency,
                       double optics_transmittance, Stream& rng) {
  const double mu = mean_photons * optics_transmittance * efficiency;
  const double u = rng.uniform();
  const int coin = rng.bit();
  if (!(mu > 0.0) || u >= -std::expm1(-mu)) {
    return Outcome::kNone;
  }
  switch (phase.difference()) {
    case 0:
      return Outcome::kD0;
    case 2:
      return Outcome::kD1;
    default:
      return coin ? Outcome::kD1 : Outcome::kD0;
  }
}

}  // namespace aftergate
