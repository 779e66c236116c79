#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "shadoc/ad/kernels.hpp"
#include "shadoc/ad/tensor.hpp"

namespace shadoc::ad {

/// Same values under a new shape of equal element count.
template <class T>
basic_tensor<T> reshape(const basic_tensor<T>& x, shape_t shape) {
  if (numel(shape) != x.numel())
    throw dimension_error("reshape: cannot view " + to_string(x.shape()) + " as " +
                          to_string(shape));
  basic_tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
  return detail::finish<T>("reshape", out, {&x}, [x](std::span<const T> g) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Swaps the two trailing axes.
template <class T>
basic_tensor<T> transpose_last2(const basic_tensor<T>& x) {
  if (x.rank() < 2) throw dimension_error("transpose_last2: rank must be at least 2");
  const std::size_t r = x.rank();
  const std::size_t m = x.extent(r - 2), n = x.extent(r - 1);
  const std::size_t batch = x.numel() / (m * n);
  shape_t shape = x.shape();
  std::swap(shape[r - 2], shape[r - 1]);
  basic_tensor<T> out(shape);
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[b * m * n + j * m + i] = xv[b * m * n + i * n + j];
  return detail::finish<T>("transpose", out, {&x}, [x, batch, m, n](std::span<const T> g) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[b * m * n + i * n + j] += g[b * m * n + j * m + i];
  });
}

/// Batched product over leading axes: [..., M, K] x [..., K, P] -> [..., M, P].
template <class T>
basic_tensor<T> matmul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  if (a.rank() < 2 || b.rank() != a.rank())
    throw dimension_error("matmul: operands need equal rank >= 2, got " + to_string(a.shape()) +
                          " and " + to_string(b.shape()));
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i)
    if (a.extent(i) != b.extent(i))
      throw dimension_error("matmul: batch axis " + std::to_string(i) + " differs (" +
                            std::to_string(a.extent(i)) + " vs " + std::to_string(b.extent(i)) +
                            ")");
  const std::size_t m = a.extent(r - 2), k = a.extent(r - 1), p = b.extent(r - 1);
  if (b.extent(r - 2) != k)
    throw dimension_error("matmul: inner axis mismatch (" + std::to_string(k) + " vs " +
                          std::to_string(b.extent(r - 2)) + ")");
  const std::size_t batch = a.numel() / (m * k);
  shape_t shape = a.shape();
  shape[r - 1] = p;
  basic_tensor<T> out(shape);
  for (std::size_t bi = 0; bi < batch; ++bi)
    kernels::gemm_rows(a.data() + bi * m * k, k, b.data() + bi * k * p, p, m, k, p, nullptr,
                       out.mutable_values().data() + bi * m * p, p);
  return detail::finish<T>("matmul", out, {&a, &b}, [a, b, batch, m, k, p](std::span<const T> g) {
    T* ga = detail::grad_of(a);
    T* gb = detail::grad_of(b);
    std::vector<T> at(k * m);
    std::vector<accum_t> tmp(k * p);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const T* av = a.data() + bi * m * k;
      const T* bv = b.data() + bi * k * p;
      const T* gv = g.data() + bi * m * p;
      if (ga)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j)
            ga[bi * m * k + i * k + j] += static_cast<T>(kernels::dot(gv + i * p, bv + j * p, p));
      if (gb) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) at[j * m + i] = av[i * k + j];
        kernels::gemm_rows(at.data(), m, gv, p, k, m, p, nullptr, tmp.data(), p);
        for (std::size_t i = 0; i < k * p; ++i) gb[bi * k * p + i] += static_cast<T>(tmp[i]);
      }
    }
  });
}

namespace detail {

struct axis_split {
  std::size_t outer, len, inner;
};

inline axis_split split_axis(const shape_t& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw dimension_error(std::string(op) + ": axis " + std::to_string(axis) +
                          " out of range for " + to_string(shape));
  axis_split s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

/// Numerically stable softmax along `axis`.
template <class T>
basic_tensor<T> softmax(const basic_tensor<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis, "softmax");
  basic_tensor<T> out(x.shape());
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t base = a * s.len * s.inner + c;
      T mx = xv[base];
      for (std::size_t i = 1; i < s.len; ++i) mx = std::max(mx, xv[base + i * s.inner]);
      accum_t total = 0;
      for (std::size_t i = 0; i < s.len; ++i) total += std::exp(accum_t(xv[base + i * s.inner] - mx));
      for (std::size_t i = 0; i < s.len; ++i)
        o[base + i * s.inner] = static_cast<T>(std::exp(accum_t(xv[base + i * s.inner] - mx)) / total);
    }
  const auto y = out.handle();
  return detail::finish<T>("softmax", out, {&x}, [x, y, s](std::span<const T> g) {
    T* gx = detail::grad_of(x);
    if (!gx) return;
    const T* yv = y->value.data();
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.len * s.inner + c;
        accum_t dotv = 0;
        for (std::size_t i = 0; i < s.len; ++i)
          dotv += accum_t(g[base + i * s.inner]) * yv[base + i * s.inner];
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t j = base + i * s.inner;
          gx[j] += static_cast<T>(accum_t(yv[j]) * (accum_t(g[j]) - dotv));
        }
      }
  });
}

/// x / max(||x||_2, eps) along `axis`.
template <class T>
basic_tensor<T> l2_normalize(const basic_tensor<T>& x, std::size_t axis, T eps = T(1e-12)) {
  const auto s = detail::split_axis(x.shape(), axis, "l2_normalize");
  basic_tensor<T> out(x.shape());
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  std::vector<accum_t> norms(s.outer * s.inner);
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t base = a * s.len * s.inner + c;
      accum_t ss = 0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const accum_t v = xv[base + i * s.inner];
        ss += v * v;
      }
      const accum_t n = std::sqrt(ss);
      norms[a * s.inner + c] = n;
      const accum_t d = std::max(n, accum_t(eps));
      for (std::size_t i = 0; i < s.len; ++i)
        o[base + i * s.inner] = static_cast<T>(xv[base + i * s.inner] / d);
    }
  const auto y = out.handle();
  return detail::finish<T>("l2_normalize", out, {&x}, [x, y, s, norms, eps](std::span<const T> g) {
    T* gx = detail::grad_of(x);
    if (!gx) return;
    const T* yv = y->value.data();
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.len * s.inner + c;
        const accum_t n = norms[a * s.inner + c];
        if (n > accum_t(eps)) {
          accum_t yg = 0;
          for (std::size_t i = 0; i < s.len; ++i)
            yg += accum_t(yv[base + i * s.inner]) * g[base + i * s.inner];
          for (std::size_t i = 0; i < s.len; ++i) {
            const std::size_t j = base + i * s.inner;
            gx[j] += static_cast<T>((accum_t(g[j]) - accum_t(yv[j]) * yg) / n);
          }
        } else {
          for (std::size_t i = 0; i < s.len; ++i) {
            const std::size_t j = base + i * s.inner;
            gx[j] += static_cast<T>(accum_t(g[j]) / accum_t(eps));
          }
        }
      }
  });
}

}  // namespace shadoc::ad
