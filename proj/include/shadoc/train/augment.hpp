#pragma once

// Paired geometric augmentation and mixup. Every random decision is drawn
// once and applied to input and target alike.

#include <cmath>
#include <string>

#include "shadoc/ad.hpp"
#include "shadoc/random.hpp"

namespace shadoc::train {

template <class T>
struct sample_pair {
  std::string name;
  ad::basic_tensor<T> input;   // [1, 3, H, W], shadowed
  ad::basic_tensor<T> target;  // [1, 3, H, W], shadow-free
};

struct augment_options {
  std::size_t crop = 0;  // 0 keeps the full (rescaled) image
  double flip_p = 0.5;
  double scale_min = 0.8;
  double scale_max = 1.2;
};

/// One concrete draw of the geometric transform.
struct geometric_transform {
  std::size_t height = 0, width = 0;  // after rescaling
  std::size_t top = 0, left = 0, crop_h = 0, crop_w = 0;
  bool flip = false;
};

template <class T>
ad::basic_tensor<T> flip_horizontal(const ad::basic_tensor<T>& x) {
  const std::size_t w = x.extent(3);
  std::vector<std::size_t> rows(x.extent(2)), cols(w);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  for (std::size_t i = 0; i < w; ++i) cols[i] = w - 1 - i;
  return ad::detail::gather2d(x, rows, cols, "flip");
}

template <class T>
ad::basic_tensor<T> apply_transform(const ad::basic_tensor<T>& x, const geometric_transform& t) {
  auto y = x;
  if (t.height != x.extent(2) || t.width != x.extent(3)) y = ad::resize_bilinear(y, t.height, t.width);
  if (t.crop_h != t.height || t.crop_w != t.width) y = ad::crop(y, t.top, t.left, t.crop_h, t.crop_w);
  if (t.flip) y = flip_horizontal(y);
  return y;
}

/// Draws scale (uniform in [scale_min, scale_max]), crop window and flip, in that order.
inline geometric_transform draw_transform(std::size_t h, std::size_t w, const augment_options& opt, rng& gen) {
  geometric_transform t;
  const double s = gen.uniform(opt.scale_min, opt.scale_max);
  t.height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(h) * s)));
  t.width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(w) * s)));
  t.crop_h = opt.crop ? opt.crop : t.height;
  t.crop_w = opt.crop ? opt.crop : t.width;
  if (t.crop_h > t.height || t.crop_w > t.width)
    throw config_error("augment: crop " + std::to_string(opt.crop) + " exceeds the rescaled image " +
                       std::to_string(t.width) + "x" + std::to_string(t.height));
  t.top = gen.index(t.height - t.crop_h + 1);
  t.left = gen.index(t.width - t.crop_w + 1);
  t.flip = gen.bernoulli(opt.flip_p);
  return t;
}

template <class T>
sample_pair<T> augment(const sample_pair<T>& pair, rng& gen, const augment_options& opt) {
  if (pair.input.shape() != pair.target.shape())
    throw dimension_error("augment: input and target of '" + pair.name + "' differ in shape");
  const auto t = draw_transform(pair.input.extent(2), pair.input.extent(3), opt, gen);
  return {pair.name, apply_transform(pair.input, t), apply_transform(pair.target, t)};
}

/// lambda * a + (1 - lambda) * b on inputs and targets.
template <class T>
sample_pair<T> mixup(const sample_pair<T>& a, const sample_pair<T>& b, double lambda) {
  if (a.input.shape() != b.input.shape() || a.target.shape() != b.target.shape())
    throw dimension_error("mixup: pairs '" + a.name + "' and '" + b.name + "' differ in shape");
  if (!(lambda >= 0 && lambda <= 1)) throw contract_error("mixup: lambda must lie in [0, 1]");
  auto mix = [lambda](const ad::basic_tensor<T>& x, const ad::basic_tensor<T>& y) {
    ad::basic_tensor<T> out(x.shape());
    auto o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i)
      o[i] = static_cast<T>(lambda * double(x.values()[i]) + (1 - lambda) * double(y.values()[i]));
    return out;
  };
  return {a.name + "+" + b.name, mix(a.input, b.input), mix(a.target, b.target)};
}

}  // namespace shadoc::train
