#pragma once

// Full pipeline: Otsu prior -> detector (soft mask) -> refiner.

#include "shadoc/nn/cfr.hpp"
#include "shadoc/nn/config.hpp"
#include "shadoc/nn/params.hpp"
#include "shadoc/nn/std_detector.hpp"

namespace shadoc::nn {

template <class T>
struct model_output {
  basic_tensor<T> image;  // [1, 3, H, W], clamped to [0, 1]
  basic_tensor<T> mask;   // [1, 1, H, W]
};

template <class T>
class basic_model {
 public:
  /// Parameters are created and drawn in a fixed order: detector (if enabled), then refiner.
  basic_model(const model_config& cfg, rng& gen) : cfg_(cfg) { build(gen); }

  basic_model(const model_config& cfg, std::uint64_t seed) : cfg_(cfg) {
    rng gen(seed);
    build(gen);
  }

  const model_config& config() const { return cfg_; }
  basic_param_store<T>& params() { return params_; }
  const basic_param_store<T>& params() const { return params_; }
  const std_detector<T>& detector() const { return detector_; }
  const cfr_refiner<T>& refiner() const { return refiner_; }

  /// Soft mask from the detector, or all ones when it is ablated.
  basic_tensor<T> mask(const basic_tensor<T>& image) const {
    const std::size_t h = image.extent(2), w = image.extent(3);
    if (!cfg_.use_std) return basic_tensor<T>(shape_t{1, 1, h, w}, T(1));
    const ad::padding4 pad{0, round_up(w, 4) - w, 0, round_up(h, 4) - h};
    const auto prior = otsu_prior(image);
    auto m = detector_(ad::pad_reflect(image, pad), ad::pad_reflect(prior, pad));
    if (pad.right || pad.bottom) m = ad::crop(m, 0, 0, h, w);
    return m;
  }

  model_output<T> forward(const basic_tensor<T>& image) const {
    auto m = mask(image);
    return {refiner_(image, m), m};
  }

  basic_tensor<T> forward_raw(const basic_tensor<T>& image) const { return refiner_.forward_raw(image, mask(image)); }

 private:
  void build(rng& gen) {
    cfg_.validate();
    if (cfg_.use_std) detector_ = std_detector<T>(params_, cfg_, gen);
    refiner_ = cfr_refiner<T>(params_, cfg_, gen);
  }

  model_config cfg_;
  basic_param_store<T> params_;
  std_detector<T> detector_;
  cfr_refiner<T> refiner_;
};

using model = basic_model<float>;

}  // namespace shadoc::nn
