#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "shadoc/imaging/color.hpp"
#include "shadoc/imaging/image.hpp"

namespace shadoc::imaging {

using histogram = std::array<std::uint64_t, 256>;

struct otsu_result {
  int threshold = 0;
  double between_class_variance = 0;
  double omega0 = 0, omega1 = 0;
  double mu0 = 0, mu1 = 0;
};

inline histogram intensity_histogram(const image& gray) {
  if (gray.channels != 1)
    throw dimension_error("intensity_histogram: expected 1 channel, got " + std::to_string(gray.channels));
  histogram h{};
  for (auto p : gray.pixels) ++h[p];
  return h;
}

/// Class statistics for the split {<= t} / {> t} given exact integer counts and sums.
/// sigma_b^2 = w0 * w1 * (mu0 - mu1)^2; empty classes contribute zero.
inline otsu_result otsu_split(int t, std::uint64_t n0, std::uint64_t s0, std::uint64_t n1, std::uint64_t s1) {
  otsu_result r;
  r.threshold = t;
  const double n = static_cast<double>(n0 + n1);
  r.omega0 = static_cast<double>(n0) / n;
  r.omega1 = static_cast<double>(n1) / n;
  r.mu0 = n0 ? static_cast<double>(s0) / static_cast<double>(n0) : 0.0;
  r.mu1 = n1 ? static_cast<double>(s1) / static_cast<double>(n1) : 0.0;
  if (n0 && n1) {
    const double d = r.mu0 - r.mu1;
    r.between_class_variance = r.omega0 * r.omega1 * d * d;
  }
  return r;
}

namespace detail {

__extension__ typedef unsigned __int128 u128;

/// sigma_b^2 * N^2 = D^2 / (n0 * n1) with D = s0 * n1 - s1 * n0, kept as an
/// exact fraction so that equal variances compare equal.
struct otsu_score {
  u128 num = 0;
  u128 den = 1;
};

inline otsu_score exact_score(std::uint64_t n0, std::uint64_t s0, std::uint64_t n1, std::uint64_t s1) {
  if (!n0 || !n1) return {};
  const u128 a = u128(s0) * n1, b = u128(s1) * n0;
  const u128 d = a > b ? a - b : b - a;
  return {d * d, u128(n0) * n1};
}

/// x > y for non-negative fractions, without overflow for any 8-bit image
/// that fits in memory.
inline bool greater(const otsu_score& x, const otsu_score& y) {
  const u128 qx = x.num / x.den, qy = y.num / y.den;
  if (qx != qy) return qx > qy;
  return (x.num % x.den) * y.den > (y.num % y.den) * x.den;
}

}  // namespace detail

/// Exhaustive scan over t in [0, 255]; the smallest maximiser wins. Candidates
/// are ranked by exact integer arithmetic.
inline otsu_result otsu_threshold(const histogram& h) {
  std::uint64_t total = 0, total_sum = 0;
  for (int v = 0; v < 256; ++v) {
    total += h[v];
    total_sum += h[v] * static_cast<std::uint64_t>(v);
  }
  if (total == 0) throw dimension_error("otsu_threshold: empty histogram");
  int best_t = 0;
  detail::otsu_score best;
  std::uint64_t n0 = 0, s0 = 0, best_n0 = 0, best_s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += h[t];
    s0 += h[t] * static_cast<std::uint64_t>(t);
    const auto score = detail::exact_score(n0, s0, total - n0, total_sum - s0);
    if (t == 0 || detail::greater(score, best)) {
      best = score;
      best_t = t;
      best_n0 = n0;
      best_s0 = s0;
    }
  }
  return otsu_split(best_t, best_n0, best_s0, total - best_n0, total_sum - best_s0);
}

inline otsu_result otsu_threshold(const image& gray) { return otsu_threshold(intensity_histogram(gray)); }

/// 1 where intensity <= t (the dark side), else 0.
inline shadow_mask binarize(const image& gray, int t) {
  if (gray.channels != 1) throw dimension_error("binarize: expected 1 channel, got " + std::to_string(gray.channels));
  if (t < 0 || t > 255) throw contract_error("binarize: threshold " + std::to_string(t) + " outside [0, 255]");
  shadow_mask m(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) m.values[i] = gray.pixels[i] <= t ? 1.f : 0.f;
  return m;
}

}  // namespace shadoc::imaging
