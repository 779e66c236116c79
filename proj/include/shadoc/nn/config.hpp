#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "shadoc/error.hpp"

namespace shadoc::nn {

/// Architecture hyperparameters and ablation switches.
struct model_config {
  std::size_t base_channels = 16;
  std::size_t blocks_per_level = 2;
  std::size_t heads = 2;
  std::size_t dgfn_expansion = 2;
  std::vector<std::size_t> spp_scales{1, 2, 4, 8};
  std::size_t std_channels = 16;
  std::size_t std_blocks = 2;
  bool use_std = true;
  bool use_aggregation = true;
  bool use_cdgf = true;

  static constexpr std::size_t levels = 3;

  void validate() const {
    if (base_channels == 0) throw config_error("model.base_channels must be positive");
    if (heads == 0 || base_channels % heads != 0)
      throw config_error("model.heads=" + std::to_string(heads) +
                         " must divide model.base_channels=" + std::to_string(base_channels));
    if (dgfn_expansion == 0) throw config_error("model.dgfn_expansion must be positive");
    if (spp_scales.empty()) throw config_error("model.spp_scales must not be empty");
    for (std::size_t i = 0; i < spp_scales.size(); ++i) {
      if (spp_scales[i] == 0) throw config_error("model.spp_scales entries must be positive");
      if (i && spp_scales[i] <= spp_scales[i - 1])
        throw config_error("model.spp_scales must be strictly ascending");
    }
    if ((8 * base_channels) % spp_scales.size() != 0)
      throw config_error("model.spp_scales count must divide the bottleneck width " +
                         std::to_string(8 * base_channels));
    if (use_std) {
      if (std_channels == 0 || std_channels % heads != 0)
        throw config_error("model.heads must divide model.std_channels=" + std::to_string(std_channels));
    }
  }

  bool operator==(const model_config&) const = default;
};

}  // namespace shadoc::nn
