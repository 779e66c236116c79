#pragma once

// Inner loops shared by the dense ops. Accumulation happens in double with a
// fixed association order, so results are reproducible bit for bit.

#include <algorithm>
#include <cstddef>

#include "shadoc/ad/tensor.hpp"

namespace shadoc::ad::kernels {

inline constexpr std::size_t lanes = 8;

/// sum_i a[i] * b[i], accumulated in `lanes` interleaved partial sums.
template <class A, class B>
accum_t dot(const A* a, const B* b, std::size_t n) {
  accum_t part[lanes] = {};
  std::size_t i = 0;
  for (; i + lanes <= n; i += lanes)
    for (std::size_t j = 0; j < lanes; ++j)
      part[j] += static_cast<accum_t>(a[i + j]) * static_cast<accum_t>(b[i + j]);
  accum_t tail = 0;
  for (; i < n; ++i) tail += static_cast<accum_t>(a[i]) * static_cast<accum_t>(b[i]);
  accum_t s = 0;
  for (std::size_t j = 0; j < lanes; ++j) s += part[j];
  return s + tail;
}

template <class A>
accum_t sum(const A* a, std::size_t n) {
  accum_t part[lanes] = {};
  std::size_t i = 0;
  for (; i + lanes <= n; i += lanes)
    for (std::size_t j = 0; j < lanes; ++j) part[j] += static_cast<accum_t>(a[i + j]);
  accum_t tail = 0;
  for (; i < n; ++i) tail += static_cast<accum_t>(a[i]);
  accum_t s = 0;
  for (std::size_t j = 0; j < lanes; ++j) s += part[j];
  return s + tail;
}

/// acc[i] += w * x[i]
template <class X>
inline void axpy(accum_t* __restrict acc, accum_t w, const X* __restrict x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += w * static_cast<accum_t>(x[i]);
}

/// out[m, p] = init[m] + sum_k a[m, k] * b[k, p] for a row-major block.
///
/// `a` has row stride `lda`, `b` row stride `ldb`; out is written to `out`
/// with row stride `ldo`. Outputs are produced in 4 x 8 register blocks that
/// accumulate over the whole k range, so each element sums in k order.
template <class O, class A, class B>
void gemm_rows(const A* a, std::size_t lda, const B* b, std::size_t ldb, std::size_t m,
               std::size_t k, std::size_t p, const accum_t* init, O* out, std::size_t ldo) {
  constexpr std::size_t mr = 4, nr = 8;
  std::size_t r0 = 0;
  for (; r0 + mr <= m; r0 += mr) {
    std::size_t c0 = 0;
    for (; c0 + nr <= p; c0 += nr) {
      accum_t acc[mr][nr];
      for (std::size_t r = 0; r < mr; ++r) {
        const accum_t v = init ? init[r0 + r] : 0.0;
        for (std::size_t c = 0; c < nr; ++c) acc[r][c] = v;
      }
      const A* a0 = a + r0 * lda;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const B* x = b + kk * ldb + c0;
        accum_t xv[nr];
        for (std::size_t c = 0; c < nr; ++c) xv[c] = static_cast<accum_t>(x[c]);
        for (std::size_t r = 0; r < mr; ++r) {
          const accum_t w = static_cast<accum_t>(a0[r * lda + kk]);
          for (std::size_t c = 0; c < nr; ++c) acc[r][c] += w * xv[c];
        }
      }
      for (std::size_t r = 0; r < mr; ++r)
        for (std::size_t c = 0; c < nr; ++c) out[(r0 + r) * ldo + c0 + c] = static_cast<O>(acc[r][c]);
    }
    for (; c0 < p; ++c0)
      for (std::size_t r = 0; r < mr; ++r) {
        accum_t s = init ? init[r0 + r] : 0.0;
        for (std::size_t kk = 0; kk < k; ++kk)
          s += static_cast<accum_t>(a[(r0 + r) * lda + kk]) * static_cast<accum_t>(b[kk * ldb + c0]);
        out[(r0 + r) * ldo + c0] = static_cast<O>(s);
      }
  }
  for (; r0 < m; ++r0) {
    std::size_t c0 = 0;
    for (; c0 + nr <= p; c0 += nr) {
      accum_t acc[nr];
      const accum_t v = init ? init[r0] : 0.0;
      for (std::size_t c = 0; c < nr; ++c) acc[c] = v;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const accum_t w = static_cast<accum_t>(a[r0 * lda + kk]);
        const B* x = b + kk * ldb + c0;
        for (std::size_t c = 0; c < nr; ++c) acc[c] += w * static_cast<accum_t>(x[c]);
      }
      for (std::size_t c = 0; c < nr; ++c) out[r0 * ldo + c0 + c] = static_cast<O>(acc[c]);
    }
    for (; c0 < p; ++c0) {
      accum_t s = init ? init[r0] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk)
        s += static_cast<accum_t>(a[r0 * lda + kk]) * static_cast<accum_t>(b[kk * ldb + c0]);
      out[r0 * ldo + c0] = static_cast<O>(s);
    }
  }
}

/// out[i, j] += sum_t a[i, t] * b[j, t] for i < m, j < n, t < p.
///
/// Blocks of 4 x 4 outputs share their loaded rows; each output keeps four
/// interleaved partial sums combined in a fixed order.
template <class A, class B>
void gemm_nt(const A* a, std::size_t lda, const B* b, std::size_t ldb, std::size_t m, std::size_t n,
             std::size_t p, accum_t* out, std::size_t ldo) {
  constexpr std::size_t bl = 4, ln = 4;
  std::size_t i0 = 0;
  for (; i0 + bl <= m; i0 += bl) {
    std::size_t j0 = 0;
    for (; j0 + bl <= n; j0 += bl) {
      accum_t acc[bl][bl][ln] = {};
      std::size_t t = 0;
      for (; t + ln <= p; t += ln) {
        accum_t av[bl][ln], bv[bl][ln];
        for (std::size_t r = 0; r < bl; ++r)
          for (std::size_t l = 0; l < ln; ++l) {
            av[r][l] = static_cast<accum_t>(a[(i0 + r) * lda + t + l]);
            bv[r][l] = static_cast<accum_t>(b[(j0 + r) * ldb + t + l]);
          }
        for (std::size_t r = 0; r < bl; ++r)
          for (std::size_t c = 0; c < bl; ++c)
            for (std::size_t l = 0; l < ln; ++l) acc[r][c][l] += av[r][l] * bv[c][l];
      }
      for (std::size_t r = 0; r < bl; ++r)
        for (std::size_t c = 0; c < bl; ++c) {
          accum_t s = (acc[r][c][0] + acc[r][c][1]) + (acc[r][c][2] + acc[r][c][3]);
          for (std::size_t u = t; u < p; ++u)
            s += static_cast<accum_t>(a[(i0 + r) * lda + u]) * static_cast<accum_t>(b[(j0 + c) * ldb + u]);
          out[(i0 + r) * ldo + j0 + c] += s;
        }
    }
    for (; j0 < n; ++j0)
      for (std::size_t r = 0; r < bl; ++r) out[(i0 + r) * ldo + j0] += dot(a + (i0 + r) * lda, b + j0 * ldb, p);
  }
  for (; i0 < m; ++i0)
    for (std::size_t j = 0; j < n; ++j) out[i0 * ldo + j] += dot(a + i0 * lda, b + j * ldb, p);
}

}  // namespace shadoc::ad::kernels
