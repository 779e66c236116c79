#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "shadoc/ad/tensor.hpp"
#include "shadoc/error.hpp"

namespace shadoc::imaging {

/// 8-bit raster, channels interleaved per pixel (R, G, B or a single gray).
struct image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  image() = default;

  image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {
    if (w == 0 || h == 0) throw dimension_error("image: extents must be positive");
    if (c != 1 && c != 3) throw dimension_error("image: channels must be 1 or 3, got " + std::to_string(c));
  }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  std::size_t size() const { return pixels.size(); }

  bool same_extents(const image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  bool operator==(const image&) const = default;
};

/// Per-pixel shadow map; binary {0,1} from thresholding, soft in (0,1) from the detector.
struct shadow_mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;

  shadow_mask() = default;
  shadow_mask(std::size_t w, std::size_t h, float fill = 0.f) : width(w), height(h), values(w * h, fill) {}

  float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

  bool operator==(const shadow_mask&) const = default;
};

inline void require_same_extents(const image& a, const image& b, const char* op) {
  if (a.width != b.width) throw dimension_error(std::string(op) + ": width differs");
  if (a.height != b.height) throw dimension_error(std::string(op) + ": height differs");
  if (a.channels != b.channels) throw dimension_error(std::string(op) + ": channel count differs");
}

inline std::uint8_t to_u8(double unit) {
  const double v = std::round(std::clamp(unit, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(v);
}

/// [1, C, H, W] tensor with values v / 255.
template <class T = float>
ad::basic_tensor<T> to_tensor(const image& img) {
  ad::basic_tensor<T> t(ad::shape_t{1, img.channels, img.height, img.width});
  auto v = t.mutable_values();
  const std::size_t hw = img.width * img.height;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      v[c * hw + i] = static_cast<T>(img.pixels[i * img.channels + c]) / T(255);
  return t;
}

/// Inverse of to_tensor: round(clamp(v, 0, 1) * 255).
template <class T>
image from_tensor(const ad::basic_tensor<T>& t) {
  if (t.rank() != 4 || t.extent(0) != 1)
    throw dimension_error("from_tensor: expected [1, C, H, W], got " + ad::to_string(t.shape()));
  image img(t.extent(3), t.extent(2), t.extent(1));
  const std::size_t hw = img.width * img.height;
  const auto v = t.values();
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) img.pixels[i * img.channels + c] = to_u8(double(v[c * hw + i]));
  return img;
}

template <class T = float>
ad::basic_tensor<T> to_tensor(const shadow_mask& m) {
  std::vector<T> v(m.values.begin(), m.values.end());
  return ad::basic_tensor<T>(ad::shape_t{1, 1, m.height, m.width}, std::move(v));
}

template <class T>
shadow_mask mask_from_tensor(const ad::basic_tensor<T>& t) {
  if (t.rank() != 4 || t.extent(0) != 1 || t.extent(1) != 1)
    throw dimension_error("mask_from_tensor: expected [1, 1, H, W], got " + ad::to_string(t.shape()));
  shadow_mask m(t.extent(3), t.extent(2));
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(t.values()[i]);
  return m;
}

/// Grayscale image of round(255 * value).
inline image mask_to_image(const shadow_mask& m) {
  image img(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.values.size(); ++i) img.pixels[i] = to_u8(m.values[i]);
  return img;
}

}  // namespace shadoc::imaging
