#pragma once

#include <cmath>
#include <string>

#include "aftergate/config.hpp"
#include "aftergate/eve.hpp"

namespace aftergate::test {

inline DetectorParams clavis(int detector) {
  return load_detector_params(std::string(AFTERGATE_TEST_CONFIG_DIR) +
                              (detector == 0 ? "/clavis2_d0.cfg" : "/clavis2_d1.cfg"));
}

/// Same detector with afterpulsing and dark counts switched off.
inline DetectorParams quiet(DetectorParams p) {
  p.dark_prob = 0.0;
  p.traps[0].amplitude = p.traps[1].amplitude = 0.0;
  return p;
}

inline BobConfig make_bob(DetectorParams d0, DetectorParams d1, DeadtimeMode mode) {
  d0.deadtime_mode = d1.deadtime_mode = mode;
  BobConfig bob;
  bob.d0 = std::make_shared<DetectorModel>(std::move(d0));
  bob.d1 = std::make_shared<DetectorModel>(std::move(d1));
  return bob;
}

inline BobConfig clavis_bob(DeadtimeMode mode) { return make_bob(clavis(0), clavis(1), mode); }

inline Scenario scenario(double frequency_hz, double transmittance, BobConfig bob,
                         EveParams eve = EveParams::perfect()) {
  Scenario sc;
  sc.frame = FrameConfig::from_frequency(frequency_hz);
  sc.channel.transmittance = transmittance;
  sc.bob = std::move(bob);
  sc.eve = eve;
  return sc;
}

/// Binomial 3-sigma band check.
inline bool within_sigma(double observed_rate, double p, double n, double k = 3.0) {
  return std::abs(observed_rate - p) <= k * std::sqrt(p * (1.0 - p) / n) + 1e-12;
}

}  // namespace aftergate::test
