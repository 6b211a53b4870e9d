#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ginv/errors.hpp"

namespace ginv {

// Deterministic random stream. All draws are derived from mt19937_64 with
// hand-rolled transforms so a given (seed, call sequence) produces the same
// values on every build we target.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53 bits of precision.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw ShapeError("uniform_index: n must be positive");
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one value per call (no cached second draw).
  double normal(double mean, double sigma) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Independent sub-stream; advancing the child never touches the parent.
  Rng fork() { return Rng(eng_() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ginv
