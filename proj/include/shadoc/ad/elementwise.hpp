#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "shadoc/ad/kernels.hpp"
#include "shadoc/ad/tensor.hpp"

namespace shadoc::ad {

namespace detail {

/// Strides of `shape` viewed inside `out` (right-aligned, zero on broadcast axes).
inline std::vector<std::size_t> broadcast_strides(const shape_t& shape, const shape_t& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  const std::size_t offset = out.size() - shape.size();
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[offset + i] = shape[i] == 1 ? 0 : s;
    s *= shape[i];
  }
  return strides;
}

inline shape_t broadcast_shape(const shape_t& a, const shape_t& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  shape_t out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::size_t eb = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw dimension_error(std::string(op) + ": axis " + std::to_string(i) +
                            " cannot broadcast " + std::to_string(ea) + " against " +
                            std::to_string(eb) + " (" + to_string(a) + " vs " + to_string(b) +
                            ")");
    out[i] = std::max(ea, eb);
  }
  return out;
}

/// Calls fn(out_index, a_index, b_index) for every output element in row-major order.
template <class Fn>
void for_each_broadcast(const shape_t& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t r = out.size();
  const std::size_t inner = out[r - 1];
  const std::size_t ia_step = sa[r - 1], ib_step = sb[r - 1];
  const std::size_t outer = numel(out) / inner;
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0, io = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t a = ia, b = ib;
    for (std::size_t j = 0; j < inner; ++j, ++io, a += ia_step, b += ib_step) fn(io, a, b);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class binary_kind { add, sub, mul, div };

template <class T>
basic_tensor<T> binary(const basic_tensor<T>& a, const basic_tensor<T>& b, binary_kind kind,
                       const char* op) {
  const bool same = a.shape() == b.shape();
  const shape_t out_shape = same ? a.shape() : broadcast_shape(a.shape(), b.shape(), op);
  basic_tensor<T> out(out_shape);
  T* o = out.mutable_values().data();
  const T* av = a.data();
  const T* bv = b.data();
  auto apply = [&](std::size_t io, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case binary_kind::add: o[io] = av[ia] + bv[ib]; break;
      case binary_kind::sub: o[io] = av[ia] - bv[ib]; break;
      case binary_kind::mul: o[io] = av[ia] * bv[ib]; break;
      case binary_kind::div: o[io] = av[ia] / bv[ib]; break;
    }
  };
  std::vector<std::size_t> sa, sb;
  if (same) {
    for (std::size_t i = 0; i < out.numel(); ++i) apply(i, i, i);
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, apply);
  }
  return finish<T>(op, out, {&a, &b}, [a, b, kind, same, out_shape, sa, sb](std::span<const T> g) {
    const T* av = a.data();
    const T* bv = b.data();
    T* ga = grad_of(a);
    T* gb = grad_of(b);
    auto da = [&](std::size_t io, std::size_t, std::size_t ib) -> accum_t {
      switch (kind) {
        case binary_kind::add:
        case binary_kind::sub: return g[io];
        case binary_kind::mul: return accum_t(g[io]) * bv[ib];
        case binary_kind::div: return accum_t(g[io]) / bv[ib];
      }
      return 0;
    };
    auto db = [&](std::size_t io, std::size_t ia, std::size_t ib) -> accum_t {
      switch (kind) {
        case binary_kind::add: return g[io];
        case binary_kind::sub: return -accum_t(g[io]);
        case binary_kind::mul: return accum_t(g[io]) * av[ia];
        case binary_kind::div:
          return -accum_t(g[io]) * av[ia] / (accum_t(bv[ib]) * accum_t(bv[ib]));
      }
      return 0;
    };
    if (same) {
      const std::size_t n = g.size();
      if (ga)
        for (std::size_t i = 0; i < n; ++i) ga[i] += static_cast<T>(da(i, i, i));
      if (gb)
        for (std::size_t i = 0; i < n; ++i) gb[i] += static_cast<T>(db(i, i, i));
      return;
    }
    if (ga) {
      std::vector<accum_t> acc(a.numel(), 0.0);
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::size_t io, std::size_t ia, std::size_t ib) { acc[ia] += da(io, ia, ib); });
      for (std::size_t i = 0; i < acc.size(); ++i) ga[i] += static_cast<T>(acc[i]);
    }
    if (gb) {
      std::vector<accum_t> acc(b.numel(), 0.0);
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::size_t io, std::size_t ia, std::size_t ib) { acc[ib] += db(io, ia, ib); });
      for (std::size_t i = 0; i < acc.size(); ++i) gb[i] += static_cast<T>(acc[i]);
    }
  });
}

/// Elementwise map with derivative expressed through input x and output y.
template <class T, class F, class DF>
basic_tensor<T> unary(const basic_tensor<T>& x, const char* op, F f, DF df) {
  basic_tensor<T> out(x.shape());
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = f(xv[i]);
  const auto y = out.handle();
  return finish<T>(op, out, {&x}, [x, df, y](std::span<const T> g) {
    T* gx = grad_of(x);
    if (!gx) return;
    const T* xv = x.data();
    const T* yv = y->value.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

template <class T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  return detail::binary(a, b, detail::binary_kind::add, "add");
}
template <class T>
basic_tensor<T> sub(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  return detail::binary(a, b, detail::binary_kind::sub, "sub");
}
template <class T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  return detail::binary(a, b, detail::binary_kind::mul, "mul");
}
template <class T>
basic_tensor<T> div(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  return detail::binary(a, b, detail::binary_kind::div, "div");
}

template <class T>
basic_tensor<T> operator+(const basic_tensor<T>& a, const basic_tensor<T>& b) { return add(a, b); }
template <class T>
basic_tensor<T> operator-(const basic_tensor<T>& a, const basic_tensor<T>& b) { return sub(a, b); }
template <class T>
basic_tensor<T> operator*(const basic_tensor<T>& a, const basic_tensor<T>& b) { return mul(a, b); }
template <class T>
basic_tensor<T> operator/(const basic_tensor<T>& a, const basic_tensor<T>& b) { return div(a, b); }

/// x * s + c for scalars s and c.
template <class T>
basic_tensor<T> affine(const basic_tensor<T>& x, T s, T c = T(0)) {
  basic_tensor<T> out(x.shape());
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = xv[i] * s + c;
  return detail::finish<T>("affine", out, {&x}, [x, s](std::span<const T> g) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
  });
}

template <class T>
basic_tensor<T> square(const basic_tensor<T>& x) {
  return detail::unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
basic_tensor<T> sqrt(const basic_tensor<T>& x) {
  return detail::unary(
      x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

enum class activation { gelu, silu, sigmoid, relu };

inline const char* to_string(activation a) {
  switch (a) {
    case activation::gelu: return "gelu";
    case activation::silu: return "silu";
    case activation::sigmoid: return "sigmoid";
    case activation::relu: return "relu";
  }
  return "?";
}

namespace detail {

template <class T>
T sigmoid_value(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

inline constexpr double gelu_k = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double gelu_c = 0.044715;

/// tanh through a single exp; saturates cleanly to +-1 for large |u|.
template <class T>
T tanh_exp(T u) {
  return T(1) - T(2) / (std::exp(T(2) * u) + T(1));
}

}  // namespace detail

/// Elementwise activation. GELU is the tanh approximation.
template <class T>
basic_tensor<T> activate(const basic_tensor<T>& x, activation kind) {
  using detail::sigmoid_value;
  const T k = T(detail::gelu_k), c = T(detail::gelu_c);
  switch (kind) {
    case activation::gelu:
      return detail::unary(
          x, "gelu",
          [=](T v) { return T(0.5) * v * (T(1) + detail::tanh_exp(k * (v + c * v * v * v))); },
          [=](T v, T) {
            const T t = detail::tanh_exp(k * (v + c * v * v * v));
            return T(0.5) * (T(1) + t) +
                   T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
          });
    case activation::silu:
      return detail::unary(
          x, "silu", [](T v) { return v * sigmoid_value(v); },
          [](T v, T) {
            const T s = sigmoid_value(v);
            return s * (T(1) + v * (T(1) - s));
          });
    case activation::sigmoid:
      return detail::unary(
          x, "sigmoid", [](T v) { return sigmoid_value(v); },
          [](T, T y) { return y * (T(1) - y); });
    case activation::relu:
      return detail::unary(
          x, "relu", [](T v) { return v > T(0) ? v : T(0); },
          [](T v, T) { return v > T(0) ? T(1) : T(0); });
  }
  throw config_error("unknown activation");
}

template <class T>
basic_tensor<T> gelu(const basic_tensor<T>& x) { return activate(x, activation::gelu); }
template <class T>
basic_tensor<T> sigmoid(const basic_tensor<T>& x) { return activate(x, activation::sigmoid); }

/// Clamps into [lo, hi]; the gradient passes only where the input is inside.
template <class T>
basic_tensor<T> clamp(const basic_tensor<T>& x, T lo, T hi) {
  return detail::unary(
      x, "clamp", [=](T v) { return std::min(std::max(v, lo), hi); },
      [=](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

/// Sum of all elements as a one-element tensor.
template <class T>
basic_tensor<T> sum(const basic_tensor<T>& x) {
  auto out = basic_tensor<T>::scalar(static_cast<T>(kernels::sum(x.data(), x.numel())));
  return detail::finish<T>("sum", out, {&x}, [x](std::span<const T> g) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g[0];
  });
}

template <class T>
basic_tensor<T> mean(const basic_tensor<T>& x) {
  const accum_t n = static_cast<accum_t>(x.numel());
  auto out = basic_tensor<T>::scalar(static_cast<T>(kernels::sum(x.data(), x.numel()) / n));
  return detail::finish<T>("mean", out, {&x}, [x, n](std::span<const T> g) {
    if (T* gx = detail::grad_of(x)) {
      const T s = static_cast<T>(accum_t(g[0]) / n);
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += s;
    }
  });
}

/// sum_i weights[i] * terms[i] over one-element tensors, accumulated in double.
template <class T>
basic_tensor<T> weighted_sum(const std::vector<basic_tensor<T>>& terms,
                             const std::vector<double>& weights) {
  if (terms.size() != weights.size() || terms.empty())
    throw contract_error("weighted_sum: need one weight per term");
  accum_t s = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * accum_t(terms[i].item());
  auto out = basic_tensor<T>::scalar(static_cast<T>(s));
  detail::check_finite("weighted_sum", out);
  auto* tp = basic_tape<T>::active();
  bool tracked = false;
  for (const auto& t : terms) tracked = tracked || t.requires_grad();
  if (tp && tracked) {
    out.impl().requires_grad = true;
    out.impl().leaf = false;
    tp->record("weighted_sum", out.handle(), [terms, weights](std::span<const T> g) {
      for (std::size_t i = 0; i < terms.size(); ++i)
        if (T* gt = detail::grad_of(terms[i])) gt[0] += static_cast<T>(weights[i] * g[0]);
    });
  }
  return out;
}

}  // namespace shadoc::ad
