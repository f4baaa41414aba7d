#pragma once

#include <cstdint>

namespace aftergate {

/// SplitMix64 output mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t tag) {
  return mix64(key ^ mix64(tag + 0x9E3779B97F4A7C15ULL));
}

/// Counter-based random stream.
///
/// Draw n of a stream with key k is mix64(k + n * golden), i.e. SplitMix64
/// evaluated at an explicit position. Streams are cheap to split by tag
/// (frame index, gate index, role), so every consumer gets an independent,
/// platform-stable sequence regardless of evaluation order or thread count.
class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  int bit() { return static_cast<int>(next_u64() >> 63); }

  Stream split(std::uint64_t tag) const { return Stream(derive_key(key_, tag)); }

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Role tags used when splitting a frame stream.
namespace stream_tag {
inline constexpr std::uint64_t kAlice = 0xA11CE;
inline constexpr std::uint64_t kBob = 0xB0B;
inline constexpr std::uint64_t kEve = 0xE7E;
inline constexpr std::uint64_t kPlan = 0x91A4;
inline constexpr std::uint64_t kBaseline = 0xBA5E;
inline constexpr std::uint64_t kCalibration = 0xCA1B;
inline constexpr std::uint64_t kMeasurement = 0x3EA5;
}  // namespace stream_tag

}  // namespace aftergate
