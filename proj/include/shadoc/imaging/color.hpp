#pragma once

#include "shadoc/imaging/image.hpp"

namespace shadoc::imaging {

/// BT.601 luma, rounded half up: (299 R + 587 G + 114 B + 500) / 1000.
/// Gray input is returned unchanged.
inline image to_grayscale(const image& img) {
  if (img.channels == 1) return img;
  image out(img.width, img.height, 1);
  const std::size_t n = img.width * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned r = img.pixels[3 * i], g = img.pixels[3 * i + 1], b = img.pixels[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return out;
}

/// Replicates a gray channel into R, G and B; RGB input is returned unchanged.
inline image to_rgb(const image& img) {
  if (img.channels == 3) return img;
  image out(img.width, img.height, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = img.pixels[i];
  return out;
}

}  // namespace shadoc::imaging
