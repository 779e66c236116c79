#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "shadoc/ad.hpp"
#include "shadoc/imaging/metrics.hpp"
#include "shadoc/nn/layers.hpp"
#include "shadoc/nn/params.hpp"

namespace shadoc::train {

using ad::basic_tensor;
using ad::shape_t;

namespace detail {

template <class T>
void require_same_shape(const basic_tensor<T>& a, const basic_tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw dimension_error(std::string(op) + ": shapes " + ad::to_string(a.shape()) + " and " +
                          ad::to_string(b.shape()) + " differ");
}

/// Depthwise 11x11 Gaussian (sigma 1.5) for c channels, as a constant conv weight.
template <class T>
basic_tensor<T> gaussian_kernel(std::size_t c) {
  const auto k = imaging::detail::gaussian_taps(imaging::detail::ssim_window, imaging::detail::ssim_sigma);
  const std::size_t n = k.size();
  std::vector<T> w(c * n * n);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w[(ch * n + i) * n + j] = static_cast<T>(k[i] * k[j]);
  return basic_tensor<T>(shape_t{c, 1, n, n}, std::move(w));
}

}  // namespace detail

/// Mean squared difference.
template <class T>
basic_tensor<T> mse_loss(const basic_tensor<T>& pred, const basic_tensor<T>& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  return ad::mean(ad::square(pred - target));
}

/// 1 - SSIM on unit-range NCHW tensors (L = 1), same window as the image metric.
template <class T>
basic_tensor<T> ssim_loss(const basic_tensor<T>& pred, const basic_tensor<T>& target) {
  detail::require_same_shape(pred, target, "ssim_loss");
  if (pred.rank() != 4) throw dimension_error("ssim_loss: expected NCHW, got " + ad::to_string(pred.shape()));
  const std::size_t win = imaging::detail::ssim_window;
  if (pred.extent(2) < win || pred.extent(3) < win)
    throw dimension_error("ssim_loss: spatial extents must be at least 11, got " + ad::to_string(pred.shape()));
  const std::size_t c = pred.extent(1);
  const auto k = detail::gaussian_kernel<T>(c);
  const ad::conv_options opt{1, 0, c};
  auto blur = [&](const basic_tensor<T>& v) { return ad::conv2d(v, k, opt); };
  const T c1 = T(0.01 * 0.01), c2 = T(0.03 * 0.03);
  const auto mx = blur(pred), my = blur(target);
  const auto mxx = mx * mx, myy = my * my, mxy = mx * my;
  const auto vx = blur(pred * pred) - mxx;
  const auto vy = blur(target * target) - myy;
  const auto cxy = blur(pred * target) - mxy;
  const auto num = ad::affine(mxy, T(2), c1) * ad::affine(cxy, T(2), c2);
  const auto den = ad::affine(mxx + myy, T(1), c1) * ad::affine(vx + vy, T(1), c2);
  return ad::affine(ad::mean(num / den), T(-1), T(1));
}

/// Frozen feature pyramid for the perceptual term: three stride-2 3x3 convs
/// (3 -> 8 -> 16 -> 32) with GELU, drawn from a fixed seed.
template <class T>
class perceptual_extractor {
 public:
  static constexpr std::uint64_t default_seed = 0x5D0CF0A7ull;
  static constexpr std::array<std::size_t, 4> widths{3, 8, 16, 32};

  explicit perceptual_extractor(std::uint64_t seed = default_seed) {
    rng gen(seed);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const std::string p = "perc.stage" + std::to_string(i);
      const std::size_t fan_in = widths[i] * 9;
      auto w = store_.add(p + ".weight", {widths[i + 1], widths[i], 3, 3}, nn::init::fan_in_uniform, gen, fan_in,
                          false);
      auto b = store_.add(p + ".bias", {widths[i + 1]}, nn::init::fan_in_uniform, gen, fan_in, false);
      stages_.push_back({w, b});
    }
  }

  const nn::basic_param_store<T>& params() const { return store_; }
  nn::basic_param_store<T>& params() { return store_; }

  /// Channel-unit-normalised features of every stage.
  std::vector<basic_tensor<T>> features(const basic_tensor<T>& x) const {
    std::vector<basic_tensor<T>> out;
    auto y = x;
    for (const auto& s : stages_) {
      y = ad::gelu(ad::conv2d(y, s.weight, s.bias, ad::conv_options{2, 1, 1}));
      out.push_back(ad::l2_normalize(y, 1));
    }
    return out;
  }

 private:
  struct stage {
    basic_tensor<T> weight, bias;
  };
  nn::basic_param_store<T> store_;
  std::vector<stage> stages_;
};

/// Mean over stages of the mean squared distance between normalised features.
template <class T>
basic_tensor<T> perceptual_loss(const basic_tensor<T>& pred, const basic_tensor<T>& target,
                                const perceptual_extractor<T>& extractor) {
  detail::require_same_shape(pred, target, "perceptual_loss");
  const auto fa = extractor.features(pred), fb = extractor.features(target);
  std::vector<basic_tensor<T>> terms;
  for (std::size_t i = 0; i < fa.size(); ++i) terms.push_back(mse_loss(fa[i], fb[i]));
  return ad::weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

struct loss_weights {
  double mse = 1.0;
  double ssim = 0.3;
  double perc = 0.7;

  void validate() const {
    if (!(mse >= 0) || !(ssim >= 0) || !(perc >= 0)) throw config_error("loss weights must be non-negative");
  }

  bool operator==(const loss_weights&) const = default;
};

template <class T>
struct loss_terms {
  basic_tensor<T> mse, ssim, perc, total;

  /// The weighted sum recomputed from the component values, in double.
  double weighted(const loss_weights& w) const {
    return w.mse * double(mse.item()) + w.ssim * double(ssim.item()) + w.perc * double(perc.item());
  }
};

template <class T>
loss_terms<T> total_loss(const basic_tensor<T>& pred, const basic_tensor<T>& target, const loss_weights& w,
                         const perceptual_extractor<T>& extractor) {
  loss_terms<T> r;
  r.mse = mse_loss(pred, target);
  r.ssim = ssim_loss(pred, target);
  r.perc = perceptual_loss(pred, target, extractor);
  r.total = ad::weighted_sum<T>({r.mse, r.ssim, r.perc}, {w.mse, w.ssim, w.perc});
  return r;
}

}  // namespace shadoc::train
