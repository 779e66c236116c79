#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace shadoc {

/// Single seeded random stream. Every consumer draws from one instance in a
/// fixed order, so a seed fully determines a run.
class rng {
 public:
  explicit rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Beta(a, b) via two gamma draws.
  double beta(double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(engine_);
    const double y = gb(engine_);
    const double s = x + y;
    return s > 0 ? x / s : 0.5;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace shadoc
