#pragma once

// Reproducible random streams.
//
// Generator: xoshiro256** seeded through SplitMix64. Stream k of a seed s is
// the generator seeded with splitmix(s ^ mix(k)), so each replicate or split
// owns an independent, order-free stream. The variate transforms below are
// written out so draws are bit-identical across standard libraries.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace hetgp {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  /// Independent stream `stream` derived from `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t sm = stream;
    return Rng(seed ^ splitmix64(sm));
  }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) {
      w = splitmix64(sm);
    }
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
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

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) {
      return static_cast<std::int64_t>((*this)());
    }
    // Rejection to remove modulo bias.
    const std::uint64_t limit = max() - max() % span;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  /// Exponential with the given rate.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Standard normal by the polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hetgp
