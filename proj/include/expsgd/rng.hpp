#pragma once

#include <cmath>
#include <cstdint>

namespace expsgd {

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator in the SplitMix64 family: draw i of a stream is
/// mix64(key + i*phi), where the key is derived from (seed, stream id).
/// Distinct stream ids give independent sub-streams of one seed, so data
/// sampling, feature-map construction, test sets etc. never interleave.
/// All derived values (uniforms, gaussians) are computed with explicit
/// formulas, so identical (seed, stream) always reproduces identical bytes.
class CounterRng {
 public:
  // Stream ids used across the library. kGeneric+n is free for ad-hoc use.
  enum Stream : std::uint64_t {
    kTrainSamples = 0,
    kRffFrequencies = 1,
    kRffPhases = 2,
    kTestSet = 3,
    kTrainMetricSet = 4,
    kStabilityRedraw = 5,
    kFiniteTrainIndex = 6,
    kGeneric = 100,
  };

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = kGeneric)
      : key_(mix64(seed ^ mix64(0x9e3779b97f4a7c15ULL * (stream + 1)))) {}

  std::uint64_t next_u64() { return mix64(key_ + kGolden * ++counter_); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr double kPi = 3.14159265358979323846;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace expsgd
