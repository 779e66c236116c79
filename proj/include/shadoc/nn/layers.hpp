#pragma once

#include <string>

#include "shadoc/ad.hpp"
#include "shadoc/nn/params.hpp"

namespace shadoc::nn {

struct conv_spec {
  std::size_t in = 0, out = 0, kernel = 1, stride = 1, groups = 1;
  bool bias = true;
  bool zero_init = false;
};

/// Convolution with "same" padding (kernel / 2) and optional bias.
template <class T>
struct conv_layer {
  basic_tensor<T> weight, bias;
  ad::conv_options opts;

  conv_layer() = default;

  conv_layer(basic_param_store<T>& store, const std::string& prefix, conv_spec s, rng& gen) {
    if (s.groups == 0 || s.in % s.groups || s.out % s.groups)
      throw config_error(prefix + ": groups must divide channel counts");
    const std::size_t fan_in = (s.in / s.groups) * s.kernel * s.kernel;
    const auto how = s.zero_init ? init::zeros : init::fan_in_uniform;
    weight = store.add(prefix + ".weight", {s.out, s.in / s.groups, s.kernel, s.kernel}, how, gen,
                       fan_in);
    if (s.bias) bias = store.add(prefix + ".bias", {s.out}, how, gen, fan_in);
    opts = {s.stride, s.kernel / 2, s.groups};
  }

  basic_tensor<T> operator()(const basic_tensor<T>& x) const {
    return ad::conv2d(x, weight, bias, opts);
  }
};

/// Channel-wise layer normalisation at every spatial position.
template <class T>
struct norm_layer {
  basic_tensor<T> gamma, beta;

  norm_layer() = default;

  norm_layer(basic_param_store<T>& store, const std::string& prefix, std::size_t channels,
             rng& gen) {
    gamma = store.add(prefix + ".gamma", {channels}, init::ones, gen);
    beta = store.add(prefix + ".beta", {channels}, init::zeros, gen);
  }

  basic_tensor<T> operator()(const basic_tensor<T>& x) const {
    return ad::layer_norm(x, gamma, beta, T(1e-6));
  }
};

}  // namespace shadoc::nn
