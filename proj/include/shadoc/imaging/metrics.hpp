#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "shadoc/imaging/image.hpp"

namespace shadoc::imaging {

struct metric_report {
  double psnr = 0;  // dB, +inf for identical images
  double ssim = 0;
  double rmse = 0;  // 0-255 scale
};

inline double rmse(const image& a, const image& b) {
  require_same_extents(a, b, "rmse");
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.pixels.size()));
}

inline double psnr_from_rmse(double e) {
  if (e == 0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(255.0 / e);
}

inline double psnr(const image& a, const image& b) { return psnr_from_rmse(rmse(a, b)); }

namespace detail {

inline constexpr std::size_t ssim_window = 11;
inline constexpr double ssim_sigma = 1.5;

inline std::vector<double> gaussian_taps(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double c = (static_cast<double>(n) - 1) / 2;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2 * sigma * sigma));
    s += k[i];
  }
  for (auto& v : k) v /= s;
  return k;
}

/// Separable valid-region filtering of a h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                        const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * src[y * w + x + i];
      rows[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM per channel (11x11 Gaussian, sigma 1.5, L = 255, valid region),
/// averaged over channels.
inline double ssim(const image& a, const image& b) {
  require_same_extents(a, b, "ssim");
  const std::size_t win = detail::ssim_window;
  if (a.width < win || a.height < win)
    throw dimension_error("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          " is smaller than the 11x11 window");
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  const auto k = detail::gaussian_taps(win, detail::ssim_sigma);
  const std::size_t h = a.height, w = a.width, hw = h * w;
  double total = 0;
  for (std::size_t c = 0; c < a.channels; ++c) {
    std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      x[i] = a.pixels[i * a.channels + c];
      y[i] = b.pixels[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, h, w, k), my = detail::filter_valid(y, h, w, k);
    const auto sxx = detail::filter_valid(xx, h, w, k), syy = detail::filter_valid(yy, h, w, k);
    const auto sxy = detail::filter_valid(xy, h, w, k);
    double s = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      s += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(a.channels);
}

inline metric_report evaluate(const image& pred, const image& target) {
  metric_report r;
  r.rmse = rmse(pred, target);
  r.psnr = psnr_from_rmse(r.rmse);
  r.ssim = ssim(pred, target);
  return r;
}

/// Four decimals, "inf" for infinite values.
inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace shadoc::imaging
