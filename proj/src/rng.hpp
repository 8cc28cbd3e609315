#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace kcsm {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Subseed derivation: one stream per (root, stream label, index).
/// All randomness in the library flows through this scheme so that results
/// are reproducible independently of thread count.
inline uint64_t derive_seed(uint64_t root, uint64_t stream, uint64_t index) {
  uint64_t h = splitmix64(root);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ index);
  return h;
}

/// Deterministic RNG wrapper. std::mt19937_64 output is fully specified by
/// the standard; the distributions below avoid std:: distribution objects,
/// whose results are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0,1) with 53-bit resolution.
  double u01() { return (next_u64() >> 11) * 0x1.0p-53; }

  /// True with probability prob.
  bool bernoulli(double prob) { return u01() < prob; }

  /// Exponential with the given rate.
  double exponential(double rate) {
    double u;
    do { u = u01(); } while (u <= 0.0);
    return -std::log(u) / rate;
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  uint64_t below(uint64_t n) {
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    // Marsaglia polar, deterministic draw order
    for (;;) {
      double a = 2.0 * u01() - 1.0, b = 2.0 * u01() - 1.0;
      double s = a * a + b * b;
      if (s > 0.0 && s < 1.0) return a * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace kcsm
