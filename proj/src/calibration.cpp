#include "aftergate/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "aftergate/format.hpp"
#include "aftergate/parallel.hpp"

namespace aftergate {

bool CumulativeCurve::resolved() const {
  return !points.empty() && points.front().first_d0.has_value();
}

void CumulativeCurve::validate() const {
  const bool res = resolved();
  double prev[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const CumulativePoint& p = points[i];
    if (p.gate != static_cast<int>(i) + 1) {
      throw std::invalid_argument("cumulative curve gates must run 1, 2, ..., K");
    }
    if (p.first_d0.has_value() != res || p.first_d1.has_value() != res) {
      throw std::invalid_argument("detector-resolved columns must be present on every row");
    }
    const double cols[3] = {p.either, res ? *p.first_d0 : 0.0, res ? *p.first_d1 : 0.0};
    for (int c = 0; c < 3; ++c) {
      if (!(cols[c] >= 0.0 && cols[c] <= 1.0)) {
        throw std::invalid_argument("cumulative probability outside [0, 1] at gate " +
                                    std::to_string(p.gate));
      }
      if (cols[c] < prev[c]) {
        throw std::invalid_argument("cumulative curve decreases at gate " +
                                    std::to_string(p.gate));
      }
      prev[c] = cols[c];
    }
  }
}

namespace {

CumulativeCurve curve_from_counts(const std::vector<std::int64_t>& first_either,
                                  const std::vector<std::int64_t>& first_d0,
                                  const std::vector<std::int64_t>& first_d1, std::int64_t trials,
                                  TimeNs period) {
  CumulativeCurve c;
  c.trials = trials;
  c.gate_period_ns = period;
  std::int64_t e = 0, a = 0, b = 0;
  const double n = static_cast<double>(trials);
  for (std::size_t k = 0; k < first_either.size(); ++k) {
    e += first_either[k];
    a += first_d0[k];
    b += first_d1[k];
    c.points.push_back({static_cast<int>(k) + 1, e / n, a / n, b / n});
  }
  return c;
}

}  // namespace

CumulativeCurve simulate_cumulative(const DetectorParams& d0, const DetectorParams& d1,
                                    const CumulativeOptions& opt, std::uint64_t seed) {
  if (opt.gates < 1 || opt.trials < 1 || opt.gate_period_ns < 1) {
    throw std::invalid_argument("simulate_cumulative needs gates, trials and period >= 1");
  }
  for (const DetectorParams* p : {&d0, &d1}) {
    if (p->threshold_curve.empty()) continue;
    double p0 = 0.0;
    try {
      p0 = p->threshold_curve.at(opt.pulse_delay_ns).p0_uw;
    } catch (const std::out_of_range& e) {
      throw std::invalid_argument(e.what());
    }
    if (opt.pulse_power_uw > p0) {
      throw std::invalid_argument("pulse power " + std::to_string(opt.pulse_power_uw) +
                                  " uW exceeds P_0% of " + p->name +
                                  "; the pulse could click immediately");
    }
  }
  const DetectorModel m0(d0);
  const DetectorModel m1(d1);

  // Per-trial first-click gate (0 = none) and which detectors fired in it.
  const auto n = static_cast<std::size_t>(opt.trials);
  std::vector<int> gate_of(n, 0);
  std::vector<std::uint8_t> fired(n, 0);
  const Stream root = Stream(seed).split(stream_tag::kCalibration);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    Stream rng = root.split(i);
    DetectorState s0;
    DetectorState s1;
    m0.register_carriers(s0, 0, CarrierSource::kHalfPower);
    m1.register_carriers(s1, 0, CarrierSource::kHalfPower);
    for (int k = 1; k <= opt.gates; ++k) {
      s0.now = s1.now = k * opt.gate_period_ns;
      const bool c0 = m0.process_gate(s0, 0.0, rng);
      const bool c1 = m1.process_gate(s1, 0.0, rng);
      if (c0 || c1) {
        gate_of[i] = k;
        fired[i] = static_cast<std::uint8_t>((c0 ? 1 : 0) | (c1 ? 2 : 0));
        return;
      }
    }
  });

  const auto K = static_cast<std::size_t>(opt.gates);
  std::vector<std::int64_t> e(K, 0), a(K, 0), b(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (gate_of[i] == 0) continue;
    const auto k = static_cast<std::size_t>(gate_of[i] - 1);
    ++e[k];
    if (fired[i] & 1) ++a[k];
    if (fired[i] & 2) ++b[k];
  }
  return curve_from_counts(e, a, b, opt.trials, opt.gate_period_ns);
}

DecayParams DecayParams::from(const DetectorParams& p) { return {p.dark_prob, p.traps}; }

DetectorParams DecayParams::apply_to(DetectorParams base) const {
  base.dark_prob = dark_prob;
  base.traps = traps;
  return base;
}

std::vector<double> gate_hazards(const DecayParams& p, double gamma, int gates,
                                 TimeNs gate_period_ns) {
  std::vector<double> h(static_cast<std::size_t>(std::max(gates, 0)));
  for (int k = 1; k <= gates; ++k) {
    const double t = static_cast<double>(k * gate_period_ns);
    double kern = 0.0;
    for (const auto& trap : p.traps) {
      kern += trap.amplitude * std::exp(-t / (trap.lifetime_us * 1000.0));
    }
    const double ap = std::clamp(gamma * kern, 0.0, 1.0);
    h[static_cast<std::size_t>(k - 1)] = 1.0 - (1.0 - p.dark_prob) * (1.0 - ap);
  }
  return h;
}

CumulativeCurve analytic_cumulative(const DecayPair& params, double gamma, int gates,
                                    TimeNs gate_period_ns) {
  const auto h0 = gate_hazards(params[0], gamma, gates, gate_period_ns);
  const auto h1 = gate_hazards(params[1], gamma, gates, gate_period_ns);
  CumulativeCurve c;
  c.gate_period_ns = gate_period_ns;
  double survive = 1.0, a = 0.0, b = 0.0;
  for (std::size_t k = 0; k < h0.size(); ++k) {
    a += survive * h0[k];
    b += survive * h1[k];
    survive *= (1.0 - h0[k]) * (1.0 - h1[k]);
    c.points.push_back({static_cast<int>(k) + 1, 1.0 - survive, a, b});
  }
  return c;
}

FirstClickSampler::FirstClickSampler(std::int64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("sampler needs at least one trial");
  Stream rng = Stream(seed).split(stream_tag::kCalibration);
  // One stratified draw per 1/n slice, so the draws come out sorted.
  const auto n = static_cast<std::size_t>(trials);
  draws_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    draws_[i] = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(n);
  }
}

double FirstClickSampler::fraction_below(double cdf) const {
  // Empirical CDF of the draws, linearly interpolated between them so the
  // objective moves continuously with the parameters.
  const auto n = static_cast<double>(draws_.size());
  const auto it = std::lower_bound(draws_.begin(), draws_.end(), cdf);
  const auto j = static_cast<std::size_t>(it - draws_.begin());
  const double x0 = j == 0 ? 0.0 : draws_[j - 1];
  const double x1 = j == draws_.size() ? 1.0 : draws_[j];
  const double w = x1 > x0 ? (cdf - x0) / (x1 - x0) : 0.0;
  return std::min((static_cast<double>(j) + w) / n, 1.0);
}

CumulativeCurve FirstClickSampler::sample(const DecayPair& params, double gamma, int gates,
                                          TimeNs gate_period_ns) const {
  const auto h0 = gate_hazards(params[0], gamma, gates, gate_period_ns);
  const auto h1 = gate_hazards(params[1], gamma, gates, gate_period_ns);
  CumulativeCurve c;
  c.trials = static_cast<std::int64_t>(draws_.size());
  c.gate_period_ns = gate_period_ns;
  double survive = 1.0, prev = 0.0, a = 0.0, b = 0.0;
  for (std::size_t k = 0; k < h0.size(); ++k) {
    const double hk = 1.0 - (1.0 - h0[k]) * (1.0 - h1[k]);
    survive *= 1.0 - hk;
    const double either = fraction_below(1.0 - survive);
    // Which detector fired is averaged out given the first-click gate.
    if (hk > 0.0) {
      a += (either - prev) * h0[k] / hk;
      b += (either - prev) * h1[k] / hk;
    }
    prev = either;
    c.points.push_back({static_cast<int>(k) + 1, either, std::min(a, either), std::min(b, either)});
  }
  return c;
}

double curve_distance(const CumulativeCurve& simulated, const CumulativeCurve& measured) {
  if (simulated.points.size() < measured.points.size()) {
    throw std::invalid_argument("simulated curve is shorter than the measured one");
  }
  const bool res = measured.resolved() && simulated.resolved();
  double sum = 0.0;
  for (std::size_t k = 0; k < measured.points.size(); ++k) {
    const auto& s = simulated.points[k];
    const auto& m = measured.points[k];
    sum += (s.either - m.either) * (s.either - m.either);
    if (res) {
      sum += (*s.first_d0 - *m.first_d0) * (*s.first_d0 - *m.first_d0);
      sum += (*s.first_d1 - *m.first_d1) * (*s.first_d1 - *m.first_d1);
    }
  }
  return sum;
}

namespace {

constexpr int kDim = 10;
using Vec = std::array<double, kDim>;

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Keeps the transforms away from 0 and 1 so logit/log stay finite.
double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

Vec encode(const DecayPair& p) {
  Vec x{};
  for (int d = 0; d < 2; ++d) {
    const DecayParams& q = p[static_cast<std::size_t>(d)];
    x[5 * d] = logit(clamp_prob(q.dark_prob));
    for (int i = 0; i < 2; ++i) {
      x[5 * d + 1 + i] = logit(clamp_prob(q.traps[static_cast<std::size_t>(i)].amplitude));
      x[5 * d + 3 + i] = std::log(std::max(q.traps[static_cast<std::size_t>(i)].lifetime_us, 1e-9));
    }
  }
  return x;
}

DecayPair decode(const Vec& x) {
  DecayPair p{};
  for (int d = 0; d < 2; ++d) {
    DecayParams& q = p[static_cast<std::size_t>(d)];
    q.dark_prob = logistic(x[5 * d]);
    for (int i = 0; i < 2; ++i) {
      q.traps[static_cast<std::size_t>(i)].amplitude = logistic(x[5 * d + 1 + i]);
      q.traps[static_cast<std::size_t>(i)].lifetime_us = std::exp(x[5 * d + 3 + i]);
    }
  }
  return p;
}

void sort_lifetimes(DecayPair& p) {
  for (auto& q : p) {
    if (q.traps[0].lifetime_us > q.traps[1].lifetime_us) std::swap(q.traps[0], q.traps[1]);
  }
}

struct Simplex {
  std::array<Vec, kDim + 1> x{};
  std::array<double, kDim + 1> f{};
};

}  // namespace

FitResult fit_decay_params(const CumulativeCurve& measured, const DecayPair& initial_guess,
                           const FitOptions& opt, std::uint64_t seed) {
  measured.validate();
  if (measured.points.size() < 10) {
    throw std::invalid_argument("fit needs at least 10 curve points");
  }
  if (opt.budget < kDim + 1) {
    throw std::invalid_argument("fit budget must cover the initial simplex");
  }
  const int gates = static_cast<int>(measured.points.size());
  const FirstClickSampler sampler(opt.trials, seed);

  int evals = 0;
  auto objective = [&](const Vec& v) {
    ++evals;
    const double r = curve_distance(
        sampler.sample(decode(v), opt.gamma, gates, measured.gate_period_ns), measured);
    return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
  };

  FitResult result;
  Vec best = encode(initial_guess);
  double best_f = objective(best);
  result.initial_residual = best_f;

  constexpr double kStep = 0.3;
  constexpr double kFtol = 1e-10;
  // Dimension-adapted reflection, expansion, contraction and shrink factors.
  constexpr double kExpand = 1.0 + 2.0 / kDim;
  constexpr double kContract = 0.75 - 0.5 / kDim;
  constexpr double kShrink = 1.0 - 1.0 / kDim;
  bool converged = false;
  while (evals + kDim + 1 <= opt.budget) {
    Simplex s;
    s.x[0] = best;
    s.f[0] = best_f;
    for (int i = 0; i < kDim; ++i) {
      s.x[i + 1] = best;
      s.x[i + 1][i] += kStep;
      s.f[i + 1] = objective(s.x[i + 1]);
    }
    const double start_f = best_f;
    bool shrunk_to_tol = false;
    while (evals < opt.budget) {
      std::array<int, kDim + 1> order{};
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) { return s.f[a] < s.f[b]; });
      Simplex sorted;
      for (int i = 0; i <= kDim; ++i) {
        sorted.x[i] = s.x[order[i]];
        sorted.f[i] = s.f[order[i]];
      }
      s = sorted;
      if (s.f[kDim] - s.f[0] <= kFtol * (1.0 + s.f[0])) {
        shrunk_to_tol = true;
        break;
      }
      Vec centroid{};
      for (int i = 0; i < kDim; ++i) {
        for (int d = 0; d < kDim; ++d) centroid[d] += s.x[i][d] / kDim;
      }
      auto along = [&](double t) {
        Vec v;
        for (int d = 0; d < kDim; ++d) v[d] = centroid[d] + t * (s.x[kDim][d] - centroid[d]);
        return v;
      };
      const Vec xr = along(-1.0);
      const double fr = objective(xr);
      if (fr < s.f[0]) {
        const Vec xe = along(-kExpand);
        const double fe = evals < opt.budget ? objective(xe) : fr;
        if (fe < fr) {
          s.x[kDim] = xe;
          s.f[kDim] = fe;
        } else {
          s.x[kDim] = xr;
          s.f[kDim] = fr;
        }
        continue;
      }
      if (fr < s.f[kDim - 1]) {
        s.x[kDim] = xr;
        s.f[kDim] = fr;
        continue;
      }
      const bool outside = fr < s.f[kDim];
      const Vec xc = along(outside ? -kContract : kContract);
      const double fc = objective(xc);
      if (fc < (outside ? fr : s.f[kDim])) {
        s.x[kDim] = xc;
        s.f[kDim] = fc;
        continue;
      }
      for (int i = 1; i <= kDim && evals < opt.budget; ++i) {
        for (int d = 0; d < kDim; ++d) s.x[i][d] = s.x[0][d] + kShrink * (s.x[i][d] - s.x[0][d]);
        s.f[i] = objective(s.x[i]);
      }
    }
    for (int i = 0; i <= kDim; ++i) {
      if (s.f[i] < best_f) {
        best_f = s.f[i];
        best = s.x[i];
      }
    }
    // A restart that no longer moves the optimum ends the search.
    if (shrunk_to_tol && start_f - best_f <= kFtol * (1.0 + best_f)) {
      converged = true;
      break;
    }
  }

  result.params = decode(best);
  sort_lifetimes(result.params);
  result.residual = best_f;
  result.iterations = evals;
  result.converged = converged;
  result.best_curve = sampler.sample(result.params, opt.gamma, gates, measured.gate_period_ns);
  return result;
}

CumulativeCurve load_cumulative_curve(const std::filesystem::path& path, TimeNs gate_period_ns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve file " + path.string());
  CumulativeCurve c;
  c.gate_period_ns = gate_period_ns;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<double> cols;
    for (double v; fields >> v;) cols.push_back(v);
    if (!fields.eof()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": unparsable field");
    }
    if (cols.empty()) continue;
    if (cols.size() != 2 && cols.size() != 4) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 2 or 4 columns");
    }
    CumulativePoint p;
    p.gate = static_cast<int>(std::lround(cols[0]));
    p.either = cols[1];
    if (cols.size() == 4) {
      p.first_d0 = cols[2];
      p.first_d1 = cols[3];
    }
    c.points.push_back(p);
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return c;
}

void write_cumulative_curve(std::ostream& out, const CumulativeCurve& curve) {
  const bool res = curve.resolved();
  out << "# gate  cumulative" << (res ? "  first_d0  first_d1" : "") << "\n";
  out << "# trials " << curve.trials << "  gate_period_ns " << curve.gate_period_ns << "\n";
  for (const auto& p : curve.points) {
    out << p.gate << ' ' << format_double(p.either);
    if (res) out << ' ' << format_double(*p.first_d0) << ' ' << format_double(*p.first_d1);
    out << '\n';
  }
}

}  // namespace aftergate
