#pragma once

// Cascaded fusion refiner: patch embedding, three-level U-shaped encoder and
// decoder with multi-level aggregation, pyramid pooling at the bottleneck and
// a final transformer refinement.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "shadoc/ad.hpp"
#include "shadoc/nn/blocks.hpp"
#include "shadoc/nn/config.hpp"

namespace shadoc::nn {

/// Encoder features e0..e2 (before each downsampling) and the bottleneck e3.
template <class T>
using feature_pyramid = std::array<basic_tensor<T>, model_config::levels + 1>;

template <class T>
struct encoder_level {
  std::vector<cdgf_block<T>> gated;
  std::vector<plain_block<T>> plain;
  conv_layer<T> down;

  basic_tensor<T> blocks(basic_tensor<T> x) const {
    for (const auto& b : gated) x = b(x);
    for (const auto& b : plain) x = b(x);
    return x;
  }
};

template <class T>
struct decoder_level {
  conv_layer<T> up;
  std::vector<transformer_block<T>> blocks;
};

/// Smallest multiple of m that is >= n.
inline std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

template <class T>
struct cfr_refiner {
  model_config cfg;
  conv_layer<T> embed;
  std::array<encoder_level<T>, model_config::levels> enc;
  std::array<conv_layer<T>, model_config::levels> agg_proj;
  conv_layer<T> agg_fuse;
  spp_module<T> pyramid_pool;
  std::array<decoder_level<T>, model_config::levels> dec;
  transformer_block<T> refine;
  conv_layer<T> out;

  cfr_refiner() = default;

  cfr_refiner(basic_param_store<T>& store, const model_config& config, rng& gen) : cfg(config) {
    cfg.validate();
    const std::size_t c = cfg.base_channels;
    embed = conv_layer<T>(store, "embed.conv", {4, c, 3}, gen);
    for (std::size_t i = 0; i < model_config::levels; ++i) {
      const std::size_t ci = c << i;
      const std::string p = "enc.level" + std::to_string(i);
      for (std::size_t j = 0; j < cfg.blocks_per_level; ++j) {
        const std::string bp = p + ".block" + std::to_string(j);
        if (cfg.use_cdgf)
          enc[i].gated.emplace_back(store, bp, ci, gen);
        else
          enc[i].plain.emplace_back(store, bp, ci, gen);
      }
      enc[i].down = conv_layer<T>(store, p + ".down", {ci, 2 * ci, 3, 2}, gen);
    }
    const std::size_t cb = c << model_config::levels;
    if (cfg.use_aggregation) {
      for (std::size_t i = 0; i < model_config::levels; ++i)
        agg_proj[i] = conv_layer<T>(store, "agg.proj" + std::to_string(i),
                                    {c << i, cb, 1, 1, 1, false}, gen);
      agg_fuse = conv_layer<T>(store, "agg.fuse", {cb, cb, 3}, gen);
    }
    pyramid_pool = spp_module<T>(store, "spp", cb, cfg.spp_scales.size(), gen);
    for (std::size_t k = 0; k < model_config::levels; ++k) {
      const std::size_t cin = cb >> k;
      const std::string p = "dec.level" + std::to_string(k);
      dec[k].up = conv_layer<T>(store, p + ".up", {cin, cin / 2, 3}, gen);
      for (std::size_t j = 0; j < cfg.blocks_per_level; ++j)
        dec[k].blocks.emplace_back(store, p + ".block" + std::to_string(j), cin / 2, cfg.heads,
                                   cfg.dgfn_expansion, gen);
    }
    refine = transformer_block<T>(store, "refine.block", c, cfg.heads, cfg.dgfn_expansion, gen);
    out = conv_layer<T>(store, "refine.out", {c, 3, 3, 1, 1, true, true}, gen);
  }

  /// [image || mask] -> [1, C, H, W].
  basic_tensor<T> patch_embed(const basic_tensor<T>& x) const {
    if (x.rank() != 4 || x.extent(1) != 4)
      throw dimension_error("patch_embed: axis 1 (channels) must be 4, got shape " + ad::to_string(x.shape()));
    return ad::gelu(embed(x));
  }

  feature_pyramid<T> encode(const basic_tensor<T>& x) const {
    const std::size_t h = x.extent(2), w = x.extent(3);
    if (h % 8) throw dimension_error("encode: axis 2 (height) " + std::to_string(h) + " is not divisible by 8");
    if (w % 8) throw dimension_error("encode: axis 3 (width) " + std::to_string(w) + " is not divisible by 8");
    feature_pyramid<T> p;
    auto y = x;
    for (std::size_t i = 0; i < model_config::levels; ++i) {
      p[i] = enc[i].blocks(y);
      y = enc[i].down(p[i]);
    }
    p[model_config::levels] = y;
    return p;
  }

  basic_tensor<T> aggregate(const feature_pyramid<T>& p) const {
    const auto& bottom = p[model_config::levels];
    if (!cfg.use_aggregation) return bottom;
    const std::size_t h = bottom.extent(2), w = bottom.extent(3);
    auto sum = bottom;
    for (std::size_t i = 0; i < model_config::levels; ++i)
      sum = sum + agg_proj[i](ad::resize_bilinear(p[i], h, w));
    return agg_fuse(sum);
  }

  /// Configured pyramid scales capped at the bottleneck extent, so small inputs still run.
  std::vector<std::size_t> effective_scales(std::size_t h, std::size_t w) const {
    std::vector<std::size_t> s = cfg.spp_scales;
    for (auto& v : s) v = std::min(v, std::min(h, w));
    return s;
  }

  basic_tensor<T> spp(const basic_tensor<T>& x) const {
    return pyramid_pool(x, effective_scales(x.extent(2), x.extent(3)));
  }

  basic_tensor<T> decode(const basic_tensor<T>& agg, const feature_pyramid<T>& p) const {
    auto y = agg;
    for (std::size_t k = 0; k < model_config::levels; ++k) {
      const auto& skip = p[model_config::levels - 1 - k];
      y = dec[k].up(ad::resize_bilinear(y, 2 * y.extent(2), 2 * y.extent(3)));
      if (y.shape() != skip.shape())
        throw dimension_error("decode: stage " + std::to_string(k) + " produced " + ad::to_string(y.shape()) +
                              " but the skip feature is " + ad::to_string(skip.shape()));
      y = y + skip;
      for (const auto& b : dec[k].blocks) y = b(y);
    }
    return y;
  }

  /// Output before the clamp: image + residual, extents equal to the input's.
  basic_tensor<T> forward_raw(const basic_tensor<T>& image, const basic_tensor<T>& mask) const {
    if (image.rank() != 4 || image.extent(0) != 1 || image.extent(1) != 3)
      throw dimension_error("cfr_forward: image must be [1, 3, H, W], got " + ad::to_string(image.shape()));
    const std::size_t h = image.extent(2), w = image.extent(3);
    if (mask.shape() != shape_t{1, 1, h, w})
      throw dimension_error("cfr_forward: mask shape " + ad::to_string(mask.shape()) + " does not match image " +
                            ad::to_string(image.shape()));
    const ad::padding4 pad{0, round_up(w, 8) - w, 0, round_up(h, 8) - h};
    auto x = ad::concat_channels<T>({image, mask});
    x = ad::pad_reflect(x, pad);
    const auto pyr = encode(patch_embed(x));
    auto y = decode(spp(aggregate(pyr)), pyr);
    y = out(refine(y));
    if (pad.right || pad.bottom) y = ad::crop(y, 0, 0, h, w);
    return image + y;
  }

  basic_tensor<T> operator()(const basic_tensor<T>& image, const basic_tensor<T>& mask) const {
    return ad::clamp(forward_raw(image, mask), T(0), T(1));
  }
};

}  // namespace shadoc::nn
