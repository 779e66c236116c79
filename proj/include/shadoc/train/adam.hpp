#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "shadoc/nn/params.hpp"

namespace shadoc::train {

struct adam_options {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of a parameter store.
/// Moments are stored in the parameter scalar type; the update is computed in double.
template <class T>
class basic_adam {
 public:
  basic_adam() = default;

  basic_adam(const nn::basic_param_store<T>& store, adam_options opt) : opt_(opt) {
    for (const auto& e : store.entries()) {
      if (!e.trainable) continue;
      names_.push_back(e.name);
      m_.emplace_back(e.value.numel(), T(0));
      v_.emplace_back(e.value.numel(), T(0));
    }
  }

  const adam_options& options() const { return opt_; }
  std::uint64_t steps() const { return t_; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

  void step(nn::basic_param_store<T>& store) {
    std::size_t k = 0;
    for (auto& e : store.entries()) {
      if (!e.trainable) continue;
      if (k >= names_.size() || names_[k] != e.name || m_[k].size() != e.value.numel())
        throw state_error("adam: optimiser state does not match parameter '" + e.name + "'");
      ++k;
    }
    if (k != names_.size()) throw state_error("adam: optimiser state tracks more parameters than the store");
    ++t_;
    const double c1 = 1 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(opt_.beta2, static_cast<double>(t_));
    k = 0;
    for (auto& e : store.entries()) {
      if (!e.trainable) continue;
      auto theta = e.value.mutable_values();
      const bool has = e.value.has_grad();
      const auto g = e.value.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = has ? double(g[i]) : 0.0;
        const double mi = opt_.beta1 * double(m[i]) + (1 - opt_.beta1) * gi;
        const double vi = opt_.beta2 * double(v[i]) + (1 - opt_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        theta[i] = static_cast<T>(double(theta[i]) - opt_.lr * (mi / c1) / (std::sqrt(vi / c2) + opt_.eps));
      }
      ++k;
    }
  }

 private:
  adam_options opt_;
  std::uint64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<T>> m_, v_;
};

using adam = basic_adam<float>;

}  // namespace shadoc::train
