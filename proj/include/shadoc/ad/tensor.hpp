#pragma once

// Dense tensors with reverse-mode differentiation.
//
// A tensor is a shared handle to a node holding its shape, values and (when
// tracked) a gradient buffer. Operations executed while a tape is active and
// touching at least one tracked input append a backward rule to that tape.
// Everything is templated on the scalar so the same code runs in float for
// training and in double for finite-difference verification.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shadoc/error.hpp"

namespace shadoc::ad {

using shape_t = std::vector<std::size_t>;

/// Reductions accumulate in this type regardless of the tensor scalar.
using accum_t = double;

inline std::size_t numel(const shape_t& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::string to_string(const shape_t& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
struct node {
  shape_t shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <class T>
class basic_tensor {
 public:
  using value_type = T;

  basic_tensor() = default;

  explicit basic_tensor(shape_t shape, T fill = T(0)) : node_(std::make_shared<node<T>>()) {
    check_extents(shape);
    node_->value.assign(ad::numel(shape), fill);
    node_->shape = std::move(shape);
  }

  basic_tensor(shape_t shape, std::vector<T> values) : node_(std::make_shared<node<T>>()) {
    check_extents(shape);
    if (ad::numel(shape) != values.size())
      throw dimension_error("tensor: shape " + to_string(shape) + " holds " +
                            std::to_string(ad::numel(shape)) + " values, got " +
                            std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }

  static basic_tensor scalar(T v) { return basic_tensor(shape_t{1}, std::vector<T>{v}); }

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const shape_t& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const {
    if (axis >= rank())
      throw dimension_error("axis " + std::to_string(axis) + " out of range for shape " +
                            to_string(shape()));
    return node_->shape[axis];
  }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  const T* data() const { return node_->value.data(); }

  /// In-place access for initialisation and optimiser updates. Never call on a
  /// tensor whose value a live tape still depends on.
  std::span<T> mutable_values() { return node_->value; }

  T item() const {
    if (numel() != 1) throw contract_error("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Marks a leaf as trainable and allocates a zeroed gradient.
  basic_tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on)
      node_->grad.assign(node_->value.size(), T(0));
    else
      node_->grad.clear();
    return *this;
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
  }

  /// Value copy that is not tracked.
  basic_tensor detach() const { return basic_tensor(shape(), node_->value); }

  const std::shared_ptr<node<T>>& handle() const { return node_; }
  node<T>& impl() const { return *node_; }

 private:
  static void check_extents(const shape_t& shape) {
    if (shape.empty()) throw dimension_error("tensor: rank must be at least 1");
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (shape[i] == 0)
        throw dimension_error("tensor: extent of axis " + std::to_string(i) + " is zero");
  }

  std::shared_ptr<node<T>> node_;
};

template <class T>
class basic_tape {
 public:
  using backward_fn = std::function<void(std::span<const T> out_grad)>;

  struct entry {
    const char* op;
    std::shared_ptr<node<T>> output;
    backward_fn backward;
  };

  /// Makes a tape the recording target of the current thread while alive.
  class scope {
   public:
    explicit scope(basic_tape* tape) : previous_(active_) { active_ = tape; }
    ~scope() { active_ = previous_; }
    scope(const scope&) = delete;
    scope& operator=(const scope&) = delete;

   private:
    basic_tape* previous_;
  };

  basic_tape() = default;
  basic_tape(const basic_tape&) = delete;
  basic_tape& operator=(const basic_tape&) = delete;

  [[nodiscard]] scope activate() { return scope(this); }
  static basic_tape* active() noexcept { return active_; }

  void record(const char* op, std::shared_ptr<node<T>> output, backward_fn fn) {
    if (consumed_) throw state_error(std::string("tape already consumed; cannot record ") + op);
    entries_.push_back(entry{op, std::move(output), std::move(fn)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }

  std::vector<std::string> ops() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.op);
    return out;
  }

  /// Replays backward rules in reverse execution order, seeding d(loss) = 1.
  void backward(const basic_tensor<T>& loss) {
    if (consumed_) throw state_error("backward: tape already consumed");
    if (!loss.defined() || loss.numel() != 1)
      throw contract_error("backward: loss must be a scalar, got shape " +
                           (loss.defined() ? to_string(loss.shape()) : std::string("<none>")));
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.impl().grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward(it->output->grad);
      it->backward = nullptr;
      if (!it->output->leaf) it->output->grad.clear();
    }
  }

  /// Name and position of the first recorded op whose output holds NaN or Inf.
  std::optional<std::string> first_nonfinite() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& v = entries_[i].output->value;
      if (std::any_of(v.begin(), v.end(), [](T x) { return !std::isfinite(x); }))
        return std::string(entries_[i].op) + " (op #" + std::to_string(i) + ")";
    }
    return std::nullopt;
  }

 private:
  std::vector<entry> entries_;
  bool consumed_ = false;
  static inline thread_local basic_tape* active_ = nullptr;
};

using tensor = basic_tensor<float>;
using tape = basic_tape<float>;

namespace detail {

template <class T>
bool any_requires_grad(std::initializer_list<const basic_tensor<T>*> inputs) {
  for (auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

template <class T>
void check_finite(const char* op, const basic_tensor<T>& out) {
#ifdef SHADOC_CHECK_FINITE
  for (T v : out.values())
    if (!std::isfinite(v)) throw numeric_error(std::string(op) + " produced a non-finite value");
#else
  (void)op;
  (void)out;
#endif
}

/// Finishes an op: registers `fn` on the active tape when any input is tracked.
template <class T, class Fn>
basic_tensor<T> finish(const char* op, basic_tensor<T> out,
                       std::initializer_list<const basic_tensor<T>*> inputs, Fn&& fn) {
  check_finite(op, out);
  auto* tp = basic_tape<T>::active();
  if (tp && any_requires_grad<T>(inputs)) {
    auto& n = out.impl();
    n.requires_grad = true;
    n.leaf = false;
    tp->record(op, out.handle(), std::forward<Fn>(fn));
  }
  return out;
}

/// Gradient buffer of an input, or nullptr when it is not tracked.
template <class T>
T* grad_of(const basic_tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return t.impl().grad_buffer();
}

}  // namespace detail

}  // namespace shadoc::ad
