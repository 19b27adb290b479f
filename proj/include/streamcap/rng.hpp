#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace streamcap {

// Counter-based generator: draw n is splitmix64(key + n * golden). Output
// depends only on (seed, counter), so streams are reproducible across
// platforms and standard libraries (std::*_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x5163a9e1f2b4c3d7ULL)) {}

  std::uint64_t next_u64() {
    return mix(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate is discarded to keep
  // the draw count per call fixed.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Derives an independent seed for a sub-task (video, decoding point, ...).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix(mix(seed ^ mix(a)) + b);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace streamcap
