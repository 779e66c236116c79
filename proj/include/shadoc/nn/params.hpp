#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "shadoc/ad/tensor.hpp"
#include "shadoc/random.hpp"

namespace shadoc::nn {

using ad::basic_tensor;
using ad::shape_t;

enum class init { fan_in_uniform, zeros, ones };

template <class T>
struct param_entry {
  std::string name;
  basic_tensor<T> value;
  bool trainable = true;
};

/// Ordered, uniquely named parameter collection. Creation order is the
/// serialisation order and the order random initial values are drawn in.
template <class T>
class basic_param_store {
 public:
  basic_tensor<T> add(const std::string& name, shape_t shape, init how, rng& gen,
                      std::size_t fan_in = 1, bool trainable = true) {
    if (index_.count(name)) throw config_error("duplicate parameter name '" + name + "'");
    basic_tensor<T> t(std::move(shape));
    auto v = t.mutable_values();
    switch (how) {
      case init::zeros: break;
      case init::ones: std::fill(v.begin(), v.end(), T(1)); break;
      case init::fan_in_uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : v) x = static_cast<T>(gen.uniform(-bound, bound));
        break;
      }
    }
    if (trainable) t.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, t, trainable});
    return t;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const basic_tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw config_error("unknown parameter '" + name + "'");
    return entries_[it->second].value;
  }

  basic_tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw config_error("unknown parameter '" + name + "'");
    return entries_[it->second].value;
  }

  const std::vector<param_entry<T>>& entries() const { return entries_; }
  std::vector<param_entry<T>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Number of scalar parameters.
  std::size_t parameter_count(bool trainable_only = true) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable || !trainable_only) n += e.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_)
      if (e.trainable) e.value.zero_grad();
  }

 private:
  std::vector<param_entry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace shadoc::nn
