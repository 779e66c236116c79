#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "shadoc/ad/kernels.hpp"
#include "shadoc/ad/tensor.hpp"

namespace shadoc::ad {

struct conv_options {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

namespace detail {

struct conv_geometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, pad, groups;
  std::size_t ho, wo;
  std::size_t cin_g() const { return cin / groups; }
  std::size_t cout_g() const { return cout / groups; }
  std::size_t k() const { return cin_g() * kh * kw; }
  std::size_t p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
  bool depthwise() const { return cin_g() == 1 && cout_g() == 1; }
};

template <class T>
conv_geometry conv_check(const basic_tensor<T>& x, const basic_tensor<T>& w,
                         const basic_tensor<T>* bias, const conv_options& opt) {
  if (x.rank() != 4)
    throw dimension_error("conv2d: input must be N x C x H x W, got " + to_string(x.shape()));
  if (w.rank() != 4)
    throw dimension_error("conv2d: weight must be Cout x Cin/groups x kh x kw, got " +
                          to_string(w.shape()));
  if (opt.stride == 0) throw config_error("conv2d: stride must be positive");
  if (opt.groups == 0) throw config_error("conv2d: groups must be positive");
  conv_geometry g{x.extent(0), x.extent(1), x.extent(2), x.extent(3),
                  w.extent(0), w.extent(2), w.extent(3),
                  opt.stride, opt.padding, opt.groups, 0, 0};
  if (g.cin % g.groups != 0)
    throw config_error("conv2d: groups=" + std::to_string(g.groups) +
                       " does not divide input channels " + std::to_string(g.cin));
  if (g.cout % g.groups != 0)
    throw config_error("conv2d: groups=" + std::to_string(g.groups) +
                       " does not divide output channels " + std::to_string(g.cout));
  if (w.extent(1) != g.cin_g())
    throw dimension_error("conv2d: axis 1 (channels) mismatch: weight expects " +
                          std::to_string(w.extent(1)) + " per group, input provides " +
                          std::to_string(g.cin_g()));
  if (g.h + 2 * g.pad < g.kh)
    throw dimension_error("conv2d: axis 2 (height) " + std::to_string(g.h) +
                          " too small for kernel " + std::to_string(g.kh));
  if (g.w + 2 * g.pad < g.kw)
    throw dimension_error("conv2d: axis 3 (width) " + std::to_string(g.w) +
                          " too small for kernel " + std::to_string(g.kw));
  if (bias && bias->defined() && (bias->rank() != 1 || bias->extent(0) != g.cout))
    throw dimension_error("conv2d: bias must have shape [" + std::to_string(g.cout) + "], got " +
                          to_string(bias->shape()));
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

/// Valid output column range [lo, hi) for kernel offset j along one axis.
inline void valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t pad,
                        std::size_t j, std::size_t& lo, std::size_t& hi) {
  // out index o reads input o*stride + j - pad; need 0 <= that < in.
  lo = 0;
  while (lo < out && lo * stride + j < pad) ++lo;
  hi = lo;
  while (hi < out && hi * stride + j < pad + in) ++hi;
}

/// Output rows per band so one band of im2col columns stays cache resident.
inline std::size_t band_rows(const conv_geometry& g) { return std::max<std::size_t>(1, 256 / g.wo); }

/// col[k][t] for output rows [oy0, oy1) of one group of one image; `src`
/// points at the group's first channel. Row stride of col is (oy1 - oy0) * wo.
template <class T>
void im2col(const T* src, const conv_geometry& g, T* col, std::size_t oy0, std::size_t oy1) {
  const std::size_t tp = (oy1 - oy0) * g.wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin_g(); ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j, ++row) {
        T* dst = col + row * tp;
        std::size_t xlo, xhi;
        valid_range(g.wo, g.w, g.stride, g.pad, j, xlo, xhi);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          T* d = dst + (oy - oy0) * g.wo;
          const std::size_t iy = oy * g.stride + i;
          if (iy < g.pad || iy >= g.pad + g.h) {
            std::fill(d, d + g.wo, T(0));
            continue;
          }
          const T* s = src + (c * g.h + (iy - g.pad)) * g.w;
          std::fill(d, d + xlo, T(0));
          for (std::size_t ox = xlo; ox < xhi; ++ox) d[ox] = s[ox * g.stride + j - g.pad];
          std::fill(d + xhi, d + g.wo, T(0));
        }
      }
}

/// Scatter-adds the col rows of output rows [oy0, oy1) into an image-shaped accumulator.
inline void col2im(const accum_t* col, const conv_geometry& g, accum_t* dst, std::size_t oy0, std::size_t oy1) {
  const std::size_t tp = (oy1 - oy0) * g.wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin_g(); ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j, ++row) {
        const accum_t* s = col + row * tp;
        std::size_t xlo, xhi;
        valid_range(g.wo, g.w, g.stride, g.pad, j, xlo, xhi);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::size_t iy = oy * g.stride + i;
          if (iy < g.pad || iy >= g.pad + g.h) continue;
          accum_t* d = dst + (c * g.h + (iy - g.pad)) * g.w;
          const accum_t* sr = s + (oy - oy0) * g.wo;
          for (std::size_t ox = xlo; ox < xhi; ++ox) d[ox * g.stride + j - g.pad] += sr[ox];
        }
      }
}

/// Depthwise forward for one channel, accumulating into acc[p].
template <class T>
void depthwise_channel(const T* src, const T* kernel, const conv_geometry& g, accum_t* acc) {
  for (std::size_t i = 0; i < g.kh; ++i)
    for (std::size_t j = 0; j < g.kw; ++j) {
      const accum_t w = kernel[i * g.kw + j];
      std::size_t xlo, xhi;
      valid_range(g.wo, g.w, g.stride, g.pad, j, xlo, xhi);
      for (std::size_t oy = 0; oy < g.ho; ++oy) {
        const std::size_t iy = oy * g.stride + i;
        if (iy < g.pad || iy >= g.pad + g.h) continue;
        const T* s = src + (iy - g.pad) * g.w;
        accum_t* a = acc + oy * g.wo;
        if (g.stride == 1) {
          const T* sj = s + j - g.pad;
          for (std::size_t ox = xlo; ox < xhi; ++ox) a[ox] += w * accum_t(sj[ox]);
        } else {
          for (std::size_t ox = xlo; ox < xhi; ++ox)
            a[ox] += w * accum_t(s[ox * g.stride + j - g.pad]);
        }
      }
    }
}

}  // namespace detail

/// 2-D cross-correlation with zero padding and channel groups.
///
/// input [N, Cin, H, W], weight [Cout, Cin/groups, kh, kw], bias [Cout] or
/// undefined. Output extents are (H + 2*padding - kh) / stride + 1.
template <class T>
basic_tensor<T> conv2d(const basic_tensor<T>& input, const basic_tensor<T>& weight,
                       const basic_tensor<T>& bias, conv_options opt = {}) {
  const auto g = detail::conv_check(input, weight, &bias, opt);
  const bool has_bias = bias.defined();
  basic_tensor<T> out(shape_t{g.n, g.cout, g.ho, g.wo});
  T* o = out.mutable_values().data();
  const T* x = input.data();
  const T* w = weight.data();
  const std::size_t p = g.p(), k = g.k();

  if (g.depthwise()) {
    std::vector<accum_t> acc(p);
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t c = 0; c < g.cout; ++c) {
        std::fill(acc.begin(), acc.end(), has_bias ? accum_t(bias.data()[c]) : 0.0);
        detail::depthwise_channel(x + (n * g.cin + c) * g.h * g.w, w + c * g.kh * g.kw, g,
                                  acc.data());
        T* dst = o + (n * g.cout + c) * p;
        for (std::size_t i = 0; i < p; ++i) dst[i] = static_cast<T>(acc[i]);
      }
  } else {
    const std::size_t band = detail::band_rows(g);
    std::vector<T> col(g.pointwise() ? 0 : k * band * g.wo);
    std::vector<accum_t> init(g.cout_g(), 0.0);
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t gi = 0; gi < g.groups; ++gi) {
        const T* src = x + (n * g.cin + gi * g.cin_g()) * g.h * g.w;
        T* dst = o + (n * g.cout + gi * g.cout_g()) * p;
        for (std::size_t co = 0; co < g.cout_g(); ++co)
          init[co] = has_bias ? accum_t(bias.data()[gi * g.cout_g() + co]) : 0.0;
        if (g.pointwise()) {
          kernels::gemm_rows(w + gi * g.cout_g() * k, k, src, p, g.cout_g(), k, p, init.data(), dst, p);
          continue;
        }
        for (std::size_t oy0 = 0; oy0 < g.ho; oy0 += band) {
          const std::size_t oy1 = std::min(g.ho, oy0 + band), tp = (oy1 - oy0) * g.wo;
          detail::im2col(src, g, col.data(), oy0, oy1);
          kernels::gemm_rows(w + gi * g.cout_g() * k, k, col.data(), tp, g.cout_g(), k, tp, init.data(),
                             dst + oy0 * g.wo, p);
        }
      }
  }

  return detail::finish<T>("conv2d", out, {&input, &weight, &bias},
                           [input, weight, bias, g](std::span<const T> gout) {
    T* gx = detail::grad_of(input);
    T* gw = detail::grad_of(weight);
    T* gb = detail::grad_of(bias);
    const T* x = input.data();
    const T* w = weight.data();
    const std::size_t p = g.p(), k = g.k(), hw = g.h * g.w;

    if (gb)
      for (std::size_t c = 0; c < g.cout; ++c) {
        accum_t s = 0;
        for (std::size_t n = 0; n < g.n; ++n) s += kernels::sum(gout.data() + (n * g.cout + c) * p, p);
        gb[c] += static_cast<T>(s);
      }

    if (g.depthwise()) {
      std::vector<accum_t> dx(gx ? hw : 0);
      for (std::size_t c = 0; c < g.cout; ++c) {
        std::vector<accum_t> dw(g.kh * g.kw, 0.0);
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* src = x + (n * g.cin + c) * hw;
          const T* go = gout.data() + (n * g.cout + c) * p;
          if (gx) std::fill(dx.begin(), dx.end(), 0.0);
          for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
              std::size_t xlo, xhi;
              detail::valid_range(g.wo, g.w, g.stride, g.pad, j, xlo, xhi);
              const accum_t wv = w[c * g.kh * g.kw + i * g.kw + j];
              accum_t part = 0;
              for (std::size_t oy = 0; oy < g.ho; ++oy) {
                const std::size_t iy = oy * g.stride + i;
                if (iy < g.pad || iy >= g.pad + g.h) continue;
                const std::size_t row = (iy - g.pad) * g.w;
                const T* grow = go + oy * g.wo;
                if (g.stride == 1) {
                  const std::size_t off = row + j - g.pad;
                  if (gw) part += kernels::dot(grow + xlo, src + off + xlo, xhi - xlo);
                  if (gx) kernels::axpy(dx.data() + off + xlo, wv, grow + xlo, xhi - xlo);
                } else {
                  for (std::size_t ox = xlo; ox < xhi; ++ox) {
                    const std::size_t ix = row + ox * g.stride + j - g.pad;
                    if (gw) part += accum_t(grow[ox]) * src[ix];
                    if (gx) dx[ix] += wv * grow[ox];
                  }
                }
              }
              dw[i * g.kw + j] += part;
            }
          if (gx) {
            T* dst = gx + (n * g.cin + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] += static_cast<T>(dx[i]);
          }
        }
        if (gw)
          for (std::size_t i = 0; i < g.kh * g.kw; ++i) gw[c * g.kh * g.kw + i] += static_cast<T>(dw[i]);
      }
      return;
    }

    const std::size_t band = g.pointwise() ? g.ho : detail::band_rows(g);
    const std::size_t tmax = band * g.wo;
    std::vector<T> col(k * tmax);
    std::vector<accum_t> dw(gw ? g.cout * k : 0, 0.0);
    std::vector<T> wt(gx ? k * g.cout_g() : 0);
    std::vector<accum_t> dcol(gx ? k * tmax : 0);
    std::vector<accum_t> dx(gx ? g.cin_g() * hw : 0);
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t gi = 0; gi < g.groups; ++gi) {
        const T* src = x + (n * g.cin + gi * g.cin_g()) * hw;
        const T* go = gout.data() + (n * g.cout + gi * g.cout_g()) * p;
        if (gx) {
          const T* wg = w + gi * g.cout_g() * k;
          for (std::size_t co = 0; co < g.cout_g(); ++co)
            for (std::size_t kk = 0; kk < k; ++kk) wt[kk * g.cout_g() + co] = wg[co * k + kk];
          std::fill(dx.begin(), dx.end(), 0.0);
        }
        for (std::size_t oy0 = 0; oy0 < g.ho; oy0 += band) {
          const std::size_t oy1 = std::min(g.ho, oy0 + band), tp = (oy1 - oy0) * g.wo;
          const T* gband = go + oy0 * g.wo;
          if (gw) {
            const T* colp = src;
            std::size_t ldc = p;
            if (!g.pointwise()) {
              detail::im2col(src, g, col.data(), oy0, oy1);
              colp = col.data();
              ldc = tp;
            }
            kernels::gemm_nt(gband, p, colp, ldc, g.cout_g(), k, tp, dw.data() + gi * g.cout_g() * k, k);
          }
          if (gx) {
            kernels::gemm_rows(wt.data(), g.cout_g(), gband, p, k, g.cout_g(), tp, nullptr, dcol.data(), tp);
            if (g.pointwise()) {
              for (std::size_t kk = 0; kk < k; ++kk)
                for (std::size_t t = 0; t < tp; ++t) dx[kk * hw + oy0 * g.wo + t] += dcol[kk * tp + t];
            } else {
              detail::col2im(dcol.data(), g, dx.data(), oy0, oy1);
            }
          }
        }
        if (gx) {
          T* dst = gx + (n * g.cin + gi * g.cin_g()) * hw;
          for (std::size_t i = 0; i < dx.size(); ++i) dst[i] += static_cast<T>(dx[i]);
        }
      }
    if (gw)
      for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<T>(dw[i]);
  });
}

template <class T>
basic_tensor<T> conv2d(const basic_tensor<T>& input, const basic_tensor<T>& weight,
                       conv_options opt = {}) {
  return conv2d(input, weight, basic_tensor<T>{}, opt);
}

}  // namespace shadoc::ad
