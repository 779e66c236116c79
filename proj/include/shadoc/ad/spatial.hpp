#pragma once

// Ops over N x C x H x W feature maps.

#include <cmath>
#include <string>
#include <vector>

#include "shadoc/ad/kernels.hpp"
#include "shadoc/ad/tensor.hpp"

namespace shadoc::ad {

namespace detail {

template <class T>
void require_nchw(const basic_tensor<T>& x, const char* op) {
  if (x.rank() != 4)
    throw dimension_error(std::string(op) + ": expected N x C x H x W, got " + to_string(x.shape()));
}

}  // namespace detail

/// Normalises across channels at every spatial position, then applies
/// per-channel gamma and beta.
template <class T>
basic_tensor<T> layer_norm(const basic_tensor<T>& x, const basic_tensor<T>& gamma,
                           const basic_tensor<T>& beta, T eps = T(1e-6)) {
  detail::require_nchw(x, "layer_norm");
  if (!(eps > T(0))) throw config_error("layer_norm: eps must be positive");
  const std::size_t n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
  if (gamma.shape() != shape_t{c} || beta.shape() != shape_t{c})
    throw dimension_error("layer_norm: gamma/beta must have shape [" + std::to_string(c) + "]");
  basic_tensor<T> out(x.shape());
  std::vector<accum_t> mu(n * hw, 0.0), inv(n * hw, 0.0);
  const T* xv = x.data();
  T* o = out.mutable_values().data();
  std::vector<accum_t> s(hw), s2(hw);
  for (std::size_t b = 0; b < n; ++b) {
    const T* xb = xv + b * c * hw;
    std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) kernels::axpy(s.data(), 1.0, xb + ch * hw, hw);
    for (std::size_t p = 0; p < hw; ++p) mu[b * hw + p] = s[p] / accum_t(c);
    std::fill(s2.begin(), s2.end(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) {
        const accum_t d = accum_t(xb[ch * hw + p]) - mu[b * hw + p];
        s2[p] += d * d;
      }
    for (std::size_t p = 0; p < hw; ++p) inv[b * hw + p] = 1.0 / std::sqrt(s2[p] / accum_t(c) + accum_t(eps));
    for (std::size_t ch = 0; ch < c; ++ch) {
      const accum_t gm = gamma.data()[ch], bt = beta.data()[ch];
      for (std::size_t p = 0; p < hw; ++p) {
        const accum_t xh = (accum_t(xb[ch * hw + p]) - mu[b * hw + p]) * inv[b * hw + p];
        o[b * c * hw + ch * hw + p] = static_cast<T>(xh * gm + bt);
      }
    }
  }
  return detail::finish<T>("layer_norm", out, {&x, &gamma, &beta},
                           [x, gamma, beta, mu, inv, n, c, hw](std::span<const T> g) {
    T* gx = detail::grad_of(x);
    T* gg = detail::grad_of(gamma);
    T* gbt = detail::grad_of(beta);
    const T* xv = x.data();
    std::vector<accum_t> dgam(c, 0.0), dbet(c, 0.0);
    std::vector<accum_t> m1(hw), m2(hw);
    for (std::size_t b = 0; b < n; ++b) {
      const T* xb = xv + b * c * hw;
      const T* gb = g.data() + b * c * hw;
      std::fill(m1.begin(), m1.end(), 0.0);
      std::fill(m2.begin(), m2.end(), 0.0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const accum_t gm = gamma.data()[ch];
        accum_t sg = 0, sgx = 0;
        for (std::size_t p = 0; p < hw; ++p) {
          const accum_t xh = (accum_t(xb[ch * hw + p]) - mu[b * hw + p]) * inv[b * hw + p];
          const accum_t gv = gb[ch * hw + p];
          sg += gv;
          sgx += gv * xh;
          m1[p] += gv * gm;
          m2[p] += gv * gm * xh;
        }
        dgam[ch] += sgx;
        dbet[ch] += sg;
      }
      if (gx)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const accum_t gm = gamma.data()[ch];
          for (std::size_t p = 0; p < hw; ++p) {
            const accum_t xh = (accum_t(xb[ch * hw + p]) - mu[b * hw + p]) * inv[b * hw + p];
            const accum_t gxh = accum_t(gb[ch * hw + p]) * gm;
            gx[b * c * hw + ch * hw + p] += static_cast<T>(
                inv[b * hw + p] * (gxh - m1[p] / accum_t(c) - xh * m2[p] / accum_t(c)));
          }
        }
    }
    if (gg)
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<T>(dgam[ch]);
    if (gbt)
      for (std::size_t ch = 0; ch < c; ++ch) gbt[ch] += static_cast<T>(dbet[ch]);
  });
}

struct padding4 {
  std::size_t left = 0, right = 0, top = 0, bottom = 0;
};

namespace detail {

inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * (n - 1) - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

/// Gathers out[y, x] = in[rows[y], cols[x]] per plane; backward scatters.
template <class T>
basic_tensor<T> gather2d(const basic_tensor<T>& x, const std::vector<std::size_t>& rows,
                         const std::vector<std::size_t>& cols, const char* op) {
  const std::size_t planes = x.extent(0) * x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t oh = rows.size(), ow = cols.size();
  basic_tensor<T> out(shape_t{x.extent(0), x.extent(1), oh, ow});
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t y = 0; y < oh; ++y) {
      const T* src = xv + pl * h * w + rows[y] * w;
      T* dst = o + pl * oh * ow + y * ow;
      for (std::size_t c = 0; c < ow; ++c) dst[c] = src[cols[c]];
    }
  return finish<T>(op, out, {&x}, [x, rows, cols, planes, h, w](std::span<const T> g) {
    T* gx = grad_of(x);
    if (!gx) return;
    const std::size_t oh = rows.size(), ow = cols.size();
    std::vector<accum_t> acc(h * w);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t c = 0; c < ow; ++c) acc[rows[y] * w + cols[c]] += g[pl * oh * ow + y * ow + c];
      for (std::size_t i = 0; i < h * w; ++i) gx[pl * h * w + i] += static_cast<T>(acc[i]);
    }
  });
}

}  // namespace detail

/// Mirror padding that does not repeat the edge sample.
template <class T>
basic_tensor<T> pad_reflect(const basic_tensor<T>& x, padding4 pad) {
  detail::require_nchw(x, "pad_reflect");
  const std::size_t h = x.extent(2), w = x.extent(3);
  if (pad.left >= w || pad.right >= w)
    throw dimension_error("pad_reflect: axis 3 (width) " + std::to_string(w) +
                          " too small for reflection pad " + std::to_string(std::max(pad.left, pad.right)));
  if (pad.top >= h || pad.bottom >= h)
    throw dimension_error("pad_reflect: axis 2 (height) " + std::to_string(h) +
                          " too small for reflection pad " + std::to_string(std::max(pad.top, pad.bottom)));
  std::vector<std::size_t> rows(h + pad.top + pad.bottom), cols(w + pad.left + pad.right);
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = detail::reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad.top), h);
  for (std::size_t i = 0; i < cols.size(); ++i)
    cols[i] = detail::reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad.left), w);
  return detail::gather2d(x, rows, cols, "pad_reflect");
}

/// Spatial window [top, top+h) x [left, left+w).
template <class T>
basic_tensor<T> crop(const basic_tensor<T>& x, std::size_t top, std::size_t left, std::size_t h,
                     std::size_t w) {
  detail::require_nchw(x, "crop");
  if (h == 0 || top + h > x.extent(2))
    throw dimension_error("crop: axis 2 (height) window out of range");
  if (w == 0 || left + w > x.extent(3))
    throw dimension_error("crop: axis 3 (width) window out of range");
  std::vector<std::size_t> rows(h), cols(w);
  for (std::size_t i = 0; i < h; ++i) rows[i] = top + i;
  for (std::size_t i = 0; i < w; ++i) cols[i] = left + i;
  return detail::gather2d(x, rows, cols, "crop");
}

namespace detail {

struct lerp_tap {
  std::size_t i0, i1;
  double t;  // weight of i1
};

/// Align-corners source positions: the first and last samples map onto each other.
inline std::vector<lerp_tap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<lerp_tap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = out == 1 ? 0.0 : double(o) * double(in - 1) / double(out - 1);
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 >= in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - double(i0)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize with align-corners semantics.
template <class T>
basic_tensor<T> resize_bilinear(const basic_tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  detail::require_nchw(x, "resize_bilinear");
  if (out_h == 0 || out_w == 0) throw dimension_error("resize_bilinear: output extents must be >= 1");
  const std::size_t planes = x.extent(0) * x.extent(1), h = x.extent(2), w = x.extent(3);
  const auto ty = detail::lerp_taps(h, out_h);
  const auto tx = detail::lerp_taps(w, out_w);
  basic_tensor<T> out(shape_t{x.extent(0), x.extent(1), out_h, out_w});
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = xv + pl * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      const T* r0 = src + a.i0 * w;
      const T* r1 = src + a.i1 * w;
      T* dst = o + (pl * out_h + y) * out_w;
      for (std::size_t c = 0; c < out_w; ++c) {
        const auto& b = tx[c];
        const double top = (1.0 - b.t) * r0[b.i0] + b.t * r0[b.i1];
        const double bot = (1.0 - b.t) * r1[b.i0] + b.t * r1[b.i1];
        dst[c] = static_cast<T>((1.0 - a.t) * top + a.t * bot);
      }
    }
  }
  return detail::finish<T>("resize_bilinear", out, {&x},
                           [x, ty, tx, planes, h, w, out_h, out_w](std::span<const T> g) {
    T* gx = detail::grad_of(x);
    if (!gx) return;
    std::vector<accum_t> acc(h * w);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        for (std::size_t c = 0; c < out_w; ++c) {
          const auto& b = tx[c];
          const accum_t gv = g[(pl * out_h + y) * out_w + c];
          acc[a.i0 * w + b.i0] += gv * (1.0 - a.t) * (1.0 - b.t);
          acc[a.i0 * w + b.i1] += gv * (1.0 - a.t) * b.t;
          acc[a.i1 * w + b.i0] += gv * a.t * (1.0 - b.t);
          acc[a.i1 * w + b.i1] += gv * a.t * b.t;
        }
      }
      for (std::size_t i = 0; i < h * w; ++i) gx[pl * h * w + i] += static_cast<T>(acc[i]);
    }
  });
}

/// Mean over windows [floor(o*H/oh), ceil((o+1)*H/oh)) per axis.
template <class T>
basic_tensor<T> adaptive_avg_pool(const basic_tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  detail::require_nchw(x, "adaptive_avg_pool");
  const std::size_t planes = x.extent(0) * x.extent(1), h = x.extent(2), w = x.extent(3);
  if (out_h == 0 || out_h > h)
    throw dimension_error("adaptive_avg_pool: axis 2 output " + std::to_string(out_h) +
                          " not in [1, " + std::to_string(h) + "]");
  if (out_w == 0 || out_w > w)
    throw dimension_error("adaptive_avg_pool: axis 3 output " + std::to_string(out_w) +
                          " not in [1, " + std::to_string(w) + "]");
  auto bounds = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, std::size_t>> b(out);
    for (std::size_t o = 0; o < out; ++o) b[o] = {o * in / out, ((o + 1) * in + out - 1) / out};
    return b;
  };
  const auto by = bounds(h, out_h), bx = bounds(w, out_w);
  basic_tensor<T> out(shape_t{x.extent(0), x.extent(1), out_h, out_w});
  T* o = out.mutable_values().data();
  const T* xv = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t c = 0; c < out_w; ++c) {
        accum_t s = 0;
        for (std::size_t iy = by[y].first; iy < by[y].second; ++iy)
          s += kernels::sum(xv + pl * h * w + iy * w + bx[c].first, bx[c].second - bx[c].first);
        const accum_t cnt = accum_t((by[y].second - by[y].first) * (bx[c].second - bx[c].first));
        o[(pl * out_h + y) * out_w + c] = static_cast<T>(s / cnt);
      }
  return detail::finish<T>("adaptive_avg_pool", out, {&x},
                           [x, by, bx, planes, h, w, out_h, out_w](std::span<const T> g) {
    T* gx = detail::grad_of(x);
    if (!gx) return;
    std::vector<accum_t> acc(h * w);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t c = 0; c < out_w; ++c) {
          const accum_t cnt = accum_t((by[y].second - by[y].first) * (bx[c].second - bx[c].first));
          const accum_t gv = accum_t(g[(pl * out_h + y) * out_w + c]) / cnt;
          for (std::size_t iy = by[y].first; iy < by[y].second; ++iy)
            for (std::size_t ix = bx[c].first; ix < bx[c].second; ++ix) acc[iy * w + ix] += gv;
        }
      for (std::size_t i = 0; i < h * w; ++i) gx[pl * h * w + i] += static_cast<T>(acc[i]);
    }
  });
}

/// Concatenation along the channel axis.
template <class T>
basic_tensor<T> concat_channels(const std::vector<basic_tensor<T>>& parts) {
  if (parts.empty()) throw contract_error("concat_channels: nothing to concatenate");
  for (const auto& p : parts) detail::require_nchw(p, "concat_channels");
  const std::size_t n = parts[0].extent(0), h = parts[0].extent(2), w = parts[0].extent(3);
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.extent(0) != n) throw dimension_error("concat_channels: axis 0 (batch) mismatch");
    if (p.extent(2) != h) throw dimension_error("concat_channels: axis 2 (height) mismatch");
    if (p.extent(3) != w) throw dimension_error("concat_channels: axis 3 (width) mismatch");
    c += p.extent(1);
  }
  const std::size_t hw = h * w;
  basic_tensor<T> out(shape_t{n, c, h, w});
  T* o = out.mutable_values().data();
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.extent(1);
      std::copy_n(p.data() + b * pc * hw, pc * hw, o + (b * c + off) * hw);
      off += pc;
    }
  }
  detail::check_finite("concat_channels", out);
  bool tracked = false;
  for (const auto& p : parts) tracked = tracked || p.requires_grad();
  auto* tp = basic_tape<T>::active();
  if (tp && tracked) {
    out.impl().requires_grad = true;
    out.impl().leaf = false;
    tp->record("concat_channels", out.handle(), [parts, n, c, hw](std::span<const T> g) {
      for (std::size_t b = 0; b < n; ++b) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          const std::size_t pc = p.extent(1);
          if (T* gp = detail::grad_of(p)) {
            const T* src = g.data() + (b * c + off) * hw;
            T* dst = gp + b * pc * hw;
            for (std::size_t i = 0; i < pc * hw; ++i) dst[i] += src[i];
          }
          off += pc;
        }
      }
    });
  }
  return out;
}

/// Channels [begin, end).
template <class T>
basic_tensor<T> slice_channels(const basic_tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require_nchw(x, "slice_channels");
  const std::size_t n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
  if (begin >= end || end > c)
    throw dimension_error("slice_channels: axis 1 range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") invalid for " + std::to_string(c) + " channels");
  const std::size_t sc = end - begin;
  basic_tensor<T> out(shape_t{n, sc, x.extent(2), x.extent(3)});
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(x.data() + (b * c + begin) * hw, sc * hw, out.mutable_values().data() + b * sc * hw);
  return detail::finish<T>("slice_channels", out, {&x}, [x, n, c, hw, begin, sc](std::span<const T> g) {
    if (T* gx = detail::grad_of(x))
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < sc * hw; ++i) gx[(b * c + begin) * hw + i] += g[b * sc * hw + i];
  });
}

}  // namespace shadoc::ad
