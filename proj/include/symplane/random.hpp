#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so fixtures are reproducible regardless of
// evaluation order or thread count:
//
//   key      = mix64(seed ^ mix64(stream + 0x9E3779B97F4A7C15))
//   u64(k)   = mix64(key + (k + 1) * 0x9E3779B97F4A7C15)
//   uniform  = (u64 >> 11) * 2^-53                       in [0, 1)
//   normal   = Box-Muller on uniforms at counters 2k, 2k+1 (cosine branch)
//
// mix64 is the SplitMix64 finalizer (Stafford variant 13).

#include <cmath>
#include <cstdint>

namespace symplane {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(seed ^ mix64(stream + kGolden))) {}

  std::uint64_t u64_at(std::uint64_t k) const { return mix64(key_ + (k + 1) * kGolden); }

  double uniform_at(std::uint64_t k) const {
    return static_cast<double>(u64_at(k) >> 11) * (1.0 / 9007199254740992.0);
  }

  double normal_at(std::uint64_t k) const {
    double u1 = uniform_at(2 * k);
    double u2 = uniform_at(2 * k + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Sequential interface over the same counter space.
  std::uint64_t next_u64() { return u64_at(counter_++); }
  double uniform() { return uniform_at(counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace symplane
