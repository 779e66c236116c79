#pragma once

// Shadow-attentive threshold detector: Otsu prior plus learned features -> soft mask.

#include <string>
#include <vector>

#include "shadoc/ad.hpp"
#include "shadoc/imaging/color.hpp"
#include "shadoc/imaging/image.hpp"
#include "shadoc/imaging/otsu.hpp"
#include "shadoc/nn/blocks.hpp"
#include "shadoc/nn/config.hpp"

namespace shadoc::nn {

/// Otsu binary mask of the image's luma. A single-class image (no split with
/// positive between-class variance) yields an all-zero mask.
inline imaging::shadow_mask otsu_prior(const imaging::image& img) {
  const auto gray = imaging::to_grayscale(img);
  const auto r = imaging::otsu_threshold(gray);
  if (r.between_class_variance == 0) return imaging::shadow_mask(img.width, img.height, 0.f);
  return imaging::binarize(gray, r.threshold);
}

/// Prior for a [1, 3, H, W] unit-range tensor, quantised to 8 bits first.
template <class T>
basic_tensor<T> otsu_prior(const basic_tensor<T>& image) {
  return imaging::to_tensor<T>(otsu_prior(imaging::from_tensor(image)));
}

template <class T>
struct std_detector {
  conv_layer<T> stem, down1, down2, up1, up2, head;
  std::vector<transformer_block<T>> blocks;
  mutable std::size_t calls = 0;

  std_detector() = default;

  std_detector(basic_param_store<T>& store, const model_config& cfg, rng& gen) {
    const std::size_t c = cfg.std_channels;
    stem = conv_layer<T>(store, "std.stem", {4, c, 3}, gen);
    down1 = conv_layer<T>(store, "std.down1", {c, c, 3, 2}, gen);
    down2 = conv_layer<T>(store, "std.down2", {c, c, 3, 2}, gen);
    for (std::size_t i = 0; i < cfg.std_blocks; ++i)
      blocks.emplace_back(store, "std.block" + std::to_string(i), c, cfg.heads, cfg.dgfn_expansion, gen);
    up1 = conv_layer<T>(store, "std.up1", {c, c, 3}, gen);
    up2 = conv_layer<T>(store, "std.up2", {c, c, 3}, gen);
    head = conv_layer<T>(store, "std.head", {c, 1, 1}, gen);
  }

  /// image [1, 3, H, W], prior [1, 1, H, W] with H and W divisible by 4.
  basic_tensor<T> operator()(const basic_tensor<T>& image, const basic_tensor<T>& prior) const {
    if (image.rank() != 4 || image.extent(1) != 3)
      throw dimension_error("std_forward: expected [1, 3, H, W], got " + ad::to_string(image.shape()));
    const std::size_t h = image.extent(2), w = image.extent(3);
    if (h % 4) throw dimension_error("std_forward: axis 2 (height) " + std::to_string(h) + " is not divisible by 4");
    if (w % 4) throw dimension_error("std_forward: axis 3 (width) " + std::to_string(w) + " is not divisible by 4");
    ++calls;
    const auto s = ad::gelu(stem(ad::concat_channels<T>({image, prior})));
    auto y = ad::gelu(down2(ad::gelu(down1(s))));
    for (const auto& b : blocks) y = b(y);
    y = ad::gelu(up1(ad::resize_bilinear(y, h / 2, w / 2)));
    y = ad::gelu(up2(ad::resize_bilinear(y, h, w)));
    return ad::sigmoid(head(y + s));
  }
};

}  // namespace shadoc::nn
