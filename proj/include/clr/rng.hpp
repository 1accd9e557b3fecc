#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace clr {

// Seeded pseudo-random generator used for every stochastic choice in the
// library (weight init, shuffling, subsampling, bootstrap resampling), so
// that runs are reproducible bit-for-bit from a single integer seed.
//
// The generator is xoshiro256** (Blackman & Vigna). State is four 64-bit
// words s[0..3]; one step produces
//
//   result = rotl(s[1] * 5, 7) * 9
//   t      = s[1] << 17
//   s[2] ^= s[0];  s[3] ^= s[1];  s[1] ^= s[2];  s[0] ^= s[3]
//   s[2] ^= t;     s[3]  = rotl(s[3], 45)
//
// The state is seeded from a 64-bit seed with four outputs of splitmix64:
//
//   z = (x += 0x9E3779B97F4A7C15)
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// Doubles in [0,1) take the top 53 bits: (u >> 11) * 2^-53. Gaussians use
// the Box-Muller transform on two such doubles. These update equations are
// the reproducibility contract; any implementation of them yields the same
// streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform integer in [0, n). n must be > 0. Uses the 128-bit
  /// multiply-shift reduction (Lemire) on one 64-bit draw.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller; generates pairs, caches the second.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_double();
    double u2 = next_double();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Child generator for an independent, reproducible stream. The child is
  /// seeded with splitmix64(seed ^ (0x9E3779B97F4A7C15 * (stream + 1))).
  Rng fork(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    return Rng(splitmix64(x));
  }

  /// Fisher-Yates shuffle, descending index order.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t s_[4];
  std::uint64_t seed_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace clr
