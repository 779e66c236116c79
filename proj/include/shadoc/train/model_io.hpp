#pragma once

// Conversion between a model (plus frozen extractor and optimiser state) and a checkpoint.

#include <string>
#include <vector>

#include "shadoc/nn/model.hpp"
#include "shadoc/train/adam.hpp"
#include "shadoc/train/checkpoint.hpp"
#include "shadoc/train/losses.hpp"

namespace shadoc::train {

inline constexpr const char* config_entry = "meta.model_config";

/// Architecture as a flat float vector (all fields are small integers or flags).
inline std::vector<float> encode_config(const nn::model_config& c) {
  std::vector<float> v{float(c.base_channels), float(c.blocks_per_level), float(c.heads), float(c.dgfn_expansion),
                       float(c.std_channels),  float(c.std_blocks),       float(c.use_std), float(c.use_aggregation),
                       float(c.use_cdgf),      float(c.spp_scales.size())};
  for (auto s : c.spp_scales) v.push_back(float(s));
  return v;
}

inline nn::model_config decode_config(const std::vector<float>& v) {
  auto field = [&](std::size_t i) {
    if (i >= v.size()) throw format_error("checkpoint: model config entry is too short");
    const float x = v[i];
    if (!(x >= 0) || x != static_cast<float>(static_cast<std::size_t>(x)))
      throw format_error("checkpoint: model config field " + std::to_string(i) + " is not a count");
    return static_cast<std::size_t>(x);
  };
  nn::model_config c;
  c.base_channels = field(0);
  c.blocks_per_level = field(1);
  c.heads = field(2);
  c.dgfn_expansion = field(3);
  c.std_channels = field(4);
  c.std_blocks = field(5);
  c.use_std = field(6) != 0;
  c.use_aggregation = field(7) != 0;
  c.use_cdgf = field(8) != 0;
  const std::size_t n = field(9);
  if (v.size() != 10 + n) throw format_error("checkpoint: model config entry has the wrong length");
  c.spp_scales.clear();
  for (std::size_t i = 0; i < n; ++i) c.spp_scales.push_back(field(10 + i));
  return c;
}

inline checkpoint make_checkpoint(const nn::model& net, const perceptual_extractor<float>& extractor,
                                  const adam* opt = nullptr) {
  checkpoint ck;
  const auto cfg = encode_config(net.config());
  ck.add(config_entry, {cfg.size()}, cfg);
  auto put = [&](const nn::basic_param_store<float>& store) {
    for (const auto& e : store.entries())
      ck.add(e.name, e.value.shape(), std::vector<float>(e.value.values().begin(), e.value.values().end()));
  };
  put(net.params());
  put(extractor.params());
  if (opt) {
    ck.add("adam.t", {1}, {static_cast<float>(opt->steps())});
    for (std::size_t k = 0; k < opt->names().size(); ++k) {
      const auto& shape = net.params().at(opt->names()[k]).shape();
      ck.add("adam.m." + opt->names()[k], shape, opt->first_moments()[k]);
      ck.add("adam.v." + opt->names()[k], shape, opt->second_moments()[k]);
    }
  }
  return ck;
}

/// Copies every parameter of `store` from the checkpoint, checking shapes first
/// so a mismatch leaves the store untouched.
inline void restore_params(nn::basic_param_store<float>& store, const checkpoint& ck) {
  for (const auto& e : store.entries()) {
    const auto& src = ck.at(e.name);
    if (src.shape != e.value.shape())
      throw format_error("checkpoint: parameter '" + e.name + "' has shape " + ad::to_string(src.shape) +
                         ", model expects " + ad::to_string(e.value.shape()));
  }
  for (auto& e : store.entries()) {
    const auto& src = ck.at(e.name).values;
    std::copy(src.begin(), src.end(), e.value.mutable_values().begin());
  }
}

inline nn::model_config checkpoint_config(const checkpoint& ck) {
  const auto cfg = decode_config(ck.at(config_entry).values);
  try {
    cfg.validate();
  } catch (const config_error& e) {
    throw format_error(std::string("checkpoint: stored model config is invalid: ") + e.what());
  }
  return cfg;
}

/// Model with the stored architecture and weights.
inline nn::model load_model(const checkpoint& ck) {
  nn::model net(checkpoint_config(ck), 0);
  restore_params(net.params(), ck);
  return net;
}

inline perceptual_extractor<float> load_extractor(const checkpoint& ck) {
  perceptual_extractor<float> ex;
  restore_params(ex.params(), ck);
  return ex;
}

}  // namespace shadoc::train
