#pragma once

// Building blocks shared by the detector and the refiner.

#include <string>
#include <vector>

#include "shadoc/ad.hpp"
#include "shadoc/nn/layers.hpp"
#include "shadoc/nn/params.hpp"

namespace shadoc::nn {

/// Gated convolutional block: norm, pointwise expansion, depthwise conv,
/// split gate, pooled channel attention, projection, zero-initialised
/// per-channel scale and residual add.
template <class T>
struct cdgf_block {
  norm_layer<T> norm;
  conv_layer<T> expand, depthwise, attend, project;
  basic_tensor<T> scale;  // [1, c, 1, 1], starts at zero
  std::size_t hidden = 0;

  cdgf_block() = default;

  cdgf_block(basic_param_store<T>& store, const std::string& prefix, std::size_t c, rng& gen,
             std::size_t expansion = 2) {
    const std::size_t wide = expansion * c;
    if (wide % 2 != 0)
      throw config_error(prefix + ": expansion channel count " + std::to_string(wide) +
                         " is odd and cannot be split into two gates");
    hidden = wide / 2;
    norm = norm_layer<T>(store, prefix + ".norm", c, gen);
    expand = conv_layer<T>(store, prefix + ".expand", {c, wide, 1}, gen);
    depthwise = conv_layer<T>(store, prefix + ".dw", {wide, wide, 3, 1, wide}, gen);
    attend = conv_layer<T>(store, prefix + ".sca", {hidden, hidden, 1}, gen);
    project = conv_layer<T>(store, prefix + ".project", {hidden, c, 1}, gen);
    scale = store.add(prefix + ".scale", {1, c, 1, 1}, init::zeros, gen);
  }

  basic_tensor<T> operator()(const basic_tensor<T>& x) const {
    auto y = depthwise(expand(norm(x)));
    y = ad::slice_channels(y, 0, hidden) * ad::slice_channels(y, hidden, 2 * hidden);
    y = y * attend(ad::adaptive_avg_pool(y, 1, 1));
    return x + project(y) * scale;
  }
};

/// Residual pair of 3x3 convolutions; the stand-in when CDGF is ablated.
template <class T>
struct plain_block {
  conv_layer<T> first, second;

  plain_block() = default;

  plain_block(basic_param_store<T>& store, const std::string& prefix, std::size_t c, rng& gen) {
    first = conv_layer<T>(store, prefix + ".conv1", {c, c, 3}, gen);
    second = conv_layer<T>(store, prefix + ".conv2", {c, c, 3}, gen);
  }

  basic_tensor<T> operator()(const basic_tensor<T>& x) const {
    return x + second(ad::gelu(first(x)));
  }
};

/// Multi-head self-attention across channels. Each head forms a
/// (c/heads) x (c/heads) attention matrix from L2-normalised query/key rows
/// scaled by a learnable temperature, so cost grows linearly with pixels.
template <class T>
struct channel_attention {
  norm_layer<T> norm;
  conv_layer<T> qkv, project;
  basic_tensor<T> temperature;  // [heads, 1, 1]
  std::size_t channels = 0, heads = 1;

  channel_attention() = default;

  channel_attention(basic_param_store<T>& store, const std::string& prefix, std::size_t c,
                    std::size_t num_heads, rng& gen)
      : channels(c), heads(num_heads) {
    if (num_heads == 0 || c % num_heads != 0)
      throw config_error(prefix + ": heads=" + std::to_string(num_heads) + " does not divide " +
                         std::to_string(c) + " channels");
    norm = norm_layer<T>(store, prefix + ".norm", c, gen);
    qkv = conv_layer<T>(store, prefix + ".qkv", {c, 3 * c, 1}, gen);
    temperature = store.add(prefix + ".temperature", {num_heads, 1, 1}, init::ones, gen);
    project = conv_layer<T>(store, prefix + ".project", {c, c, 1}, gen);
  }

  /// When `attention` is given it receives the post-softmax matrices [heads, d, d].
  basic_tensor<T> operator()(const basic_tensor<T>& x, basic_tensor<T>* attention = nullptr) const {
    if (x.rank() != 4 || x.extent(0) != 1)
      throw dimension_error("channel_attention: expected [1, C, H, W], got " + ad::to_string(x.shape()));
    if (x.extent(1) != channels)
      throw dimension_error("channel_attention: axis 1 (channels) expected " +
                            std::to_string(channels) + ", got " + std::to_string(x.extent(1)));
    const std::size_t h = x.extent(2), w = x.extent(3), d = channels / heads;
    const shape_t per_head{heads, d, h * w};
    const auto mixed = qkv(norm(x));
    auto q = ad::reshape(ad::slice_channels(mixed, 0, channels), per_head);
    auto k = ad::reshape(ad::slice_channels(mixed, channels, 2 * channels), per_head);
    auto v = ad::reshape(ad::slice_channels(mixed, 2 * channels, 3 * channels), per_head);
    q = ad::l2_normalize(q, 2);
    k = ad::l2_normalize(k, 2);
    auto attn = ad::softmax(ad::matmul(q, ad::transpose_last2(k)) * temperature, 2);
    if (attention) *attention = attn;
    auto out = ad::reshape(ad::matmul(attn, v), shape_t{1, channels, h, w});
    return x + project(out);
  }
};

/// Feed-forward network whose two depthwise branches gate each other.
template <class T>
struct dgfn {
  norm_layer<T> norm;
  conv_layer<T> in_a, dw_a, in_b, dw_b, project;

  dgfn() = default;

  dgfn(basic_param_store<T>& store, const std::string& prefix, std::size_t c,
       std::size_t expansion, rng& gen) {
    const std::size_t wide = expansion * c;
    norm = norm_layer<T>(store, prefix + ".norm", c, gen);
    in_a = conv_layer<T>(store, prefix + ".in_a", {c, wide, 1}, gen);
    dw_a = conv_layer<T>(store, prefix + ".dw_a", {wide, wide, 3, 1, wide}, gen);
    in_b = conv_layer<T>(store, prefix + ".in_b", {c, wide, 1}, gen);
    dw_b = conv_layer<T>(store, prefix + ".dw_b", {wide, wide, 3, 1, wide}, gen);
    project = conv_layer<T>(store, prefix + ".project", {wide, c, 1}, gen);
  }

  basic_tensor<T> operator()(const basic_tensor<T>& x) const {
    const auto y = norm(x);
    const auto a = dw_a(in_a(y));
    const auto b = dw_b(in_b(y));
    return x + project(ad::gelu(a) * b + ad::gelu(b) * a);
  }
};

template <class T>
struct transformer_block {
  channel_attention<T> attention;
  dgfn<T> ffn;

  transformer_block() = default;

  transformer_block(basic_param_store<T>& store, const std::string& prefix, std::size_t c,
                    std::size_t heads, std::size_t expansion, rng& gen)
      : attention(store, prefix + ".attn", c, heads, gen),
        ffn(store, prefix + ".ffn", c, expansion, gen) {}

  basic_tensor<T> operator()(const basic_tensor<T>& x) const { return ffn(attention(x)); }
};

/// Spatial pyramid pooling: per scale s, pool to s x s, project to c/len
/// channels and resize back; concatenate with the input, fuse to c, add input.
template <class T>
struct spp_module {
  std::vector<conv_layer<T>> branches;
  conv_layer<T> fuse;
  std::size_t channels = 0;

  spp_module() = default;

  spp_module(basic_param_store<T>& store, const std::string& prefix, std::size_t c,
             std::size_t num_scales, rng& gen)
      : channels(c) {
    if (num_scales == 0 || c % num_scales != 0)
      throw config_error(prefix + ": scale count must divide " + std::to_string(c) + " channels");
    for (std::size_t i = 0; i < num_scales; ++i)
      branches.emplace_back(store, prefix + ".branch" + std::to_string(i),
                            conv_spec{c, c / num_scales, 1}, gen);
    fuse = conv_layer<T>(store, prefix + ".fuse", {2 * c, c, 1}, gen);
  }

  basic_tensor<T> operator()(const basic_tensor<T>& x, const std::vector<std::size_t>& scales) const {
    if (scales.size() != branches.size())
      throw config_error("spp: expected " + std::to_string(branches.size()) + " scales");
    const std::size_t h = x.extent(2), w = x.extent(3);
    std::vector<basic_tensor<T>> parts{x};
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (scales[i] == 0 || scales[i] > std::min(h, w))
        throw config_error("spp: scale " + std::to_string(scales[i]) + " exceeds feature extent " +
                           std::to_string(std::min(h, w)));
      auto pooled = ad::adaptive_avg_pool(x, scales[i], scales[i]);
      parts.push_back(ad::resize_bilinear(branches[i](pooled), h, w));
    }
    return x + fuse(ad::concat_channels(parts));
  }
};

}  // namespace shadoc::nn
