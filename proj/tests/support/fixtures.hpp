#pragma once

// Synthetic document images shared by the tests and the acceptance run.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shadoc/imaging/image.hpp"
#include "shadoc/random.hpp"
#include "shadoc/train/augment.hpp"

namespace fixtures {

using shadoc::imaging::image;

inline image flat_page(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> tint) {
  image img(w, h, 3);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = tint[c];
  return img;
}

/// Darkens rows [y0, y1) (horizontal) or columns [x0, x1) (vertical) by `factor`.
inline image with_band(image img, bool horizontal, std::size_t from, std::size_t to, double factor) {
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t pos = horizontal ? y : x;
      if (pos < from || pos >= to) continue;
      for (std::size_t c = 0; c < img.channels; ++c)
        img.at(x, y, c) = static_cast<std::uint8_t>(double(img.at(x, y, c)) * factor + 0.5);
    }
  return img;
}

struct document_pair {
  std::string name;
  image input, target;
};

/// The two 64 x 64 overfit pairs: tinted flat pages with a horizontal or a
/// vertical shadow band at 40% brightness.
inline std::vector<document_pair> overfit_pairs() {
  const auto a = flat_page(64, 64, {236, 230, 218});
  const auto b = flat_page(64, 64, {214, 224, 238});
  return {{"page_a.png", with_band(a, true, 20, 36, 0.4), a}, {"page_b.png", with_band(b, false, 8, 26, 0.4), b}};
}

inline std::vector<shadoc::train::sample_pair<float>> as_samples(const std::vector<document_pair>& pairs) {
  std::vector<shadoc::train::sample_pair<float>> out;
  for (const auto& p : pairs)
    out.push_back({p.name, shadoc::imaging::to_tensor<float>(p.input), shadoc::imaging::to_tensor<float>(p.target)});
  return out;
}

inline image random_image(shadoc::rng& gen, std::size_t w, std::size_t h, std::size_t c) {
  image img(w, h, c);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(gen.index(256));
  return img;
}

}  // namespace fixtures
