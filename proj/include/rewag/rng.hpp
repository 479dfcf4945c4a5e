#pragma once

#include <cmath>
#include <cstdint>

namespace rewag {

/// splitmix64 finalizer. Full-avalanche mix of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derive an independent child seed from (seed, tag). Used for
/// counter-based stream splitting: every subsystem, step, and particle
/// gets its own stream, so parallel evaluation is bit-reproducible.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed + 0x9E3779B97F4A7C15ull * (tag + 0x632BE59BD9B4E019ull));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}

/// Stream tags for derive_seed. Every random consumer hangs off the run
/// seed through one of these, so adding a consumer never shifts the draws
/// of another.
namespace streams {
inline constexpr std::uint64_t kWorld = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kPredict = 3;
inline constexpr std::uint64_t kHeading = 4;
inline constexpr std::uint64_t kResample = 5;
inline constexpr std::uint64_t kCompass = 6;
inline constexpr std::uint64_t kTrajectory = 7;
inline constexpr std::uint64_t kLift = 8;
inline constexpr std::uint64_t kAttentionGround = 9;
inline constexpr std::uint64_t kAttentionSat = 10;
inline constexpr std::uint64_t kLandmark = 11;
}  // namespace streams

/// splitmix64 generator. One 64-bit word of state, cheap to construct,
/// which is what makes per-particle streams affordable.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  /// Uniform double in [0, 1), 53 bits of resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal draw via Box-Muller. Consumes exactly two uniforms,
  /// no cached second value, so draw counts stay predictable.
  double gaussian() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // 1-u1 in (0,1]
    return r * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  std::uint64_t state_;
};

}  // namespace rewag
