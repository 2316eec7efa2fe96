#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "uietl/autograd.hpp"

// Differentiable building blocks on (C, H, W) activations.
namespace uietl::ops {

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
void require_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
  require_shape(a->value, b->value, "add");
  Tensor<T> out = a->value;
  accumulate(out, b->value);
  const bool req = g.needs_grad(a, b);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [a, b, o] {
      if (a->requires_grad) accumulate(a->g(), o->grad);
      if (b->requires_grad) accumulate(b->g(), o->grad);
    };
  }
  return o;
}

template <class T>
Var<T> mul(Graph<T>& g, Var<T> a, Var<T> b) {
  require_shape(a->value, b->value, "mul");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  const bool req = g.needs_grad(a, b);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [a, b, o] {
      if (a->requires_grad) {
        auto& ga = a->g();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        auto& gb = b->g();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o->grad[i] * a->value[i];
      }
    };
  }
  return o;
}

template <class T>
Var<T> silu(Graph<T>& g, Var<T> x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x->value[i];
    out[i] = v / (T(1) + std::exp(-v));
  }
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, o] {
      auto& gx = x->g();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T v = x->value[i];
        const T s = T(1) / (T(1) + std::exp(-v));
        gx[i] += o->grad[i] * s * (T(1) + v * (T(1) - s));
      }
    };
  }
  return o;
}

template <class T>
Var<T> tanh(Graph<T>& g, Var<T> x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, o] {
      auto& gx = x->g();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T y = o->value[i];
        gx[i] += o->grad[i] * (T(1) - y * y);
      }
    };
  }
  return o;
}

/// Hard clamp to [0, 1]; gradient passes only through unsaturated entries.
template <class T>
Var<T> clamp_unit(Graph<T>& g, Var<T> x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x->value[i], T(0), T(1));
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, o] {
      auto& gx = x->g();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T v = x->value[i];
        if (v > T(0) && v < T(1)) gx[i] += o->grad[i];
      }
    };
  }
  return o;
}

template <class T>
Var<T> concat_channels(Graph<T>& g, Var<T> a, Var<T> b) {
  const auto& av = a->value;
  const auto& bv = b->value;
  if (av.height() != bv.height() || av.width() != bv.width())
    throw ShapeError("concat_channels: spatial mismatch");
  Tensor<T> out(av.channels() + bv.channels(), av.height(), av.width());
  std::copy(av.ptr(), av.ptr() + av.size(), out.ptr());
  std::copy(bv.ptr(), bv.ptr() + bv.size(), out.ptr() + av.size());
  const bool req = g.needs_grad(a, b);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [a, b, o] {
      const std::size_t na = a->value.size();
      if (a->requires_grad) {
        auto& ga = a->g();
        for (std::size_t i = 0; i < na; ++i) ga[i] += o->grad[i];
      }
      if (b->requires_grad) {
        auto& gb = b->g();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o->grad[na + i];
      }
    };
  }
  return o;
}

template <class T>
Var<T> slice_channels(Graph<T>& g, Var<T> x, int start, int count) {
  const auto& xv = x->value;
  if (start < 0 || count <= 0 || start + count > xv.channels())
    throw ShapeError("slice_channels: range outside tensor");
  Tensor<T> out(count, xv.height(), xv.width());
  const std::size_t off = static_cast<std::size_t>(start) * xv.plane();
  std::copy(xv.ptr() + off, xv.ptr() + off + out.size(), out.ptr());
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, o, off] {
      auto& gx = x->g();
      for (std::size_t i = 0; i < o->grad.size(); ++i) gx[off + i] += o->grad[i];
    };
  }
  return o;
}

// ---------------------------------------------------------------------------
// Index permutations

/// Space-to-channel: element (c, y, x) moves to
/// (c + C * (r * (y mod r) + (x mod r)), y / r, x / r).
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& in, int r) {
  const int c = in.channels(), h = in.height(), w = in.width();
  if (r <= 0 || h % r != 0 || w % r != 0)
    throw AlignmentError("pixel_unshuffle: " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by " + std::to_string(r));
  Tensor<T> out(c * r * r, h / r, w / r);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(ch + c * (r * (y % r) + x % r), y / r, x / r) = in.at(ch, y, x);
  return out;
}

/// Exact inverse of pixel_unshuffle.
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& in, int r) {
  const int cin = in.channels(), h = in.height(), w = in.width();
  if (r <= 0 || cin % (r * r) != 0)
    throw AlignmentError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by " +
                         std::to_string(r * r));
  const int c = cin / (r * r);
  Tensor<T> out(c, h * r, w * r);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h * r; ++y)
      for (int x = 0; x < w * r; ++x)
        out.at(ch, y, x) = in.at(ch + c * (r * (y % r) + x % r), y / r, x / r);
  return out;
}

template <class T>
Var<T> pixel_unshuffle(Graph<T>& g, Var<T> x, int r) {
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(pixel_unshuffle(x->value, r), req, nullptr);
  if (req) o->backward = [x, o, r] { accumulate(x->g(), pixel_shuffle(o->grad, r)); };
  return o;
}

template <class T>
Var<T> pixel_shuffle(Graph<T>& g, Var<T> x, int r) {
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(pixel_shuffle(x->value, r), req, nullptr);
  if (req) o->backward = [x, o, r] { accumulate(x->g(), pixel_unshuffle(o->grad, r)); };
  return o;
}

/// Group-transpose channel reordering: input channel k lands at output
/// position (k mod g) * (C / g) + floor(k / g).
inline int reorder_destination(int k, int channels, int groups) {
  return (k % groups) * (channels / groups) + k / groups;
}

template <class T>
Tensor<T> channel_reorder(const Tensor<T>& in, int groups) {
  const int c = in.channels();
  if (groups <= 0 || c % groups != 0)
    throw AlignmentError("channel_reorder: " + std::to_string(c) + " channels, " +
                         std::to_string(groups) + " groups");
  Tensor<T> out(in.shape());
  const std::size_t p = static_cast<std::size_t>(in.plane());
  for (int k = 0; k < c; ++k) {
    const int d = reorder_destination(k, c, groups);
    std::copy(in.channel(k), in.channel(k) + p, out.channel(d));
  }
  return out;
}

template <class T>
Var<T> channel_reorder(Graph<T>& g, Var<T> x, int groups) {
  const bool req = g.needs_grad(x);
  Var<T> o = g.record(channel_reorder(x->value, groups), req, nullptr);
  if (req) {
    o->backward = [x, o, groups] {
      auto& gx = x->g();
      const int c = gx.channels();
      const std::size_t p = static_cast<std::size_t>(gx.plane());
      for (int k = 0; k < c; ++k) {
        const T* src = o->grad.channel(reorder_destination(k, c, groups));
        T* dst = gx.channel(k);
        for (std::size_t i = 0; i < p; ++i) dst[i] += src[i];
      }
    };
  }
  return o;
}

// ---------------------------------------------------------------------------
// Normalisation

/// Per-pixel layer norm across channels with learned scale/shift of shape (C).
template <class T>
Var<T> layer_norm(Graph<T>& g, Var<T> x, Var<T> weight, Var<T> bias, T eps = T(1e-5)) {
  const auto& xv = x->value;
  const int c = xv.channels();
  const int n = xv.plane();
  if (static_cast<int>(weight->value.size()) != c || static_cast<int>(bias->value.size()) != c)
    throw ShapeError("layer_norm: parameter size mismatch");
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    T mean = 0;
    for (int k = 0; k < c; ++k) mean += xv.channel(k)[p];
    mean /= T(c);
    T var = 0;
    for (int k = 0; k < c; ++k) {
      const T d = xv.channel(k)[p] - mean;
      var += d * d;
    }
    var /= T(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[p] = is;
    for (int k = 0; k < c; ++k) {
      const T h = (xv.channel(k)[p] - mean) * is;
      xhat.channel(k)[p] = h;
      out.channel(k)[p] = h * weight->value[k] + bias->value[k];
    }
  }
  const bool req = g.needs_grad(x, weight, bias);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, weight, bias, o, xhat = std::move(xhat), inv_std = std::move(inv_std), c, n] {
      const auto& dy = o->grad;
      if (weight->requires_grad || bias->requires_grad) {
        for (int k = 0; k < c; ++k) {
          T sw = 0, sb = 0;
          for (int p = 0; p < n; ++p) {
            sw += dy.channel(k)[p] * xhat.channel(k)[p];
            sb += dy.channel(k)[p];
          }
          if (weight->requires_grad) weight->g()[k] += sw;
          if (bias->requires_grad) bias->g()[k] += sb;
        }
      }
      if (x->requires_grad) {
        auto& gx = x->g();
        for (int p = 0; p < n; ++p) {
          T m1 = 0, m2 = 0;
          for (int k = 0; k < c; ++k) {
            const T dh = dy.channel(k)[p] * weight->value[k];
            m1 += dh;
            m2 += dh * xhat.channel(k)[p];
          }
          m1 /= T(c);
          m2 /= T(c);
          for (int k = 0; k < c; ++k) {
            const T dh = dy.channel(k)[p] * weight->value[k];
            gx.channel(k)[p] += inv_std[p] * (dh - m1 - xhat.channel(k)[p] * m2);
          }
        }
      }
    };
  }
  return o;
}

// ---------------------------------------------------------------------------
// Convolution

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

namespace detail {

template <class T>
void im2col(const Tensor<T>& x, int k, int s, int p, int ho, int wo, T* col) {
  const int c = x.channels(), h = x.height(), w = x.width();
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch) {
    const T* src = x.channel(ch);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (static_cast<std::size_t>(ch * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          T* row = dst + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            row[ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, int k, int s, int p, int ho, int wo, Tensor<T>& dx) {
  const int c = dx.channels(), h = dx.height(), w = dx.width();
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch) {
    T* dst = dx.channel(ch);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + (static_cast<std::size_t>(ch * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[static_cast<std::size_t>(oy) * wo + ox];
          }
        }
      }
    }
  }
}

template <class T>
Var<T> conv_dense(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b, ConvSpec s) {
  const auto& xv = x->value;
  const auto& wv = w->value;
  const int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
  if (xv.channels() != cin)
    throw ShapeError("conv2d: input has " + std::to_string(xv.channels()) + " channels, weight expects " +
                     std::to_string(cin));
  const int ho = (xv.height() + 2 * s.pad - k) / s.stride + 1;
  const int wo = (xv.width() + 2 * s.pad - k) / s.stride + 1;
  const Eigen::Index n = static_cast<Eigen::Index>(ho) * wo;
  const Eigen::Index kk = static_cast<Eigen::Index>(cin) * k * k;
  const bool pointwise = k == 1 && s.stride == 1 && s.pad == 0;

  AlignedVector<T> col;
  if (!pointwise) {
    col.resize(static_cast<std::size_t>(kk * n));
    im2col(xv, k, s.stride, s.pad, ho, wo, col.data());
  }
  const T* colp = pointwise ? xv.ptr() : col.data();

  Tensor<T> out(cout, ho, wo);
  MatMap<T> y(out.ptr(), cout, n);
  ConstMatMap<T> wm(wv.ptr(), cout, kk);
  ConstMatMap<T> cm(colp, kk, n);
  y.noalias() = wm * cm;
  if (b) {
    for (int o = 0; o < cout; ++o) y.row(o).array() += b->value[o];
  }

  const bool req = g.needs_grad(x, w, b);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, w, b, o, s, k, cout, kk, n, ho, wo, pointwise, col = std::move(col)] {
      ConstMatMap<T> dy(o->grad.ptr(), cout, n);
      const T* colp = pointwise ? x->value.ptr() : col.data();
      ConstMatMap<T> cm(colp, kk, n);
      if (w->requires_grad) {
        MatMap<T> dw(w->g().ptr(), cout, kk);
        dw.noalias() += dy * cm.transpose();
      }
      if (b && b->requires_grad) {
        auto& db = b->g();
        for (int c = 0; c < cout; ++c) db[c] += dy.row(c).sum();
      }
      if (x->requires_grad) {
        ConstMatMap<T> wm(w->value.ptr(), cout, kk);
        if (pointwise) {
          MatMap<T> dx(x->g().ptr(), kk, n);
          dx.noalias() += wm.transpose() * dy;
        } else {
          MatrixR<T> dcol = wm.transpose() * dy;
          col2im(dcol.data(), k, s.stride, s.pad, ho, wo, x->g());
        }
      }
    };
  }
  return o;
}

template <class T>
Var<T> conv_depthwise(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b, ConvSpec s) {
  const auto& xv = x->value;
  const auto& wv = w->value;
  const int c = xv.channels(), h = xv.height(), wd = xv.width(), k = wv.dim(2);
  const int ho = (h + 2 * s.pad - k) / s.stride + 1;
  const int wo = (wd + 2 * s.pad - k) / s.stride + 1;
  Tensor<T> out(c, ho, wo);
  for (int ch = 0; ch < c; ++ch) {
    const T* src = xv.channel(ch);
    const T* ker = wv.ptr() + static_cast<std::size_t>(ch) * k * k;
    T* dst = out.channel(ch);
    const T bias = b ? b->value[ch] : T(0);
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T acc = bias;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= wd) continue;
            acc += ker[ky * k + kx] * src[iy * wd + ix];
          }
        }
        dst[oy * wo + ox] = acc;
      }
    }
  }
  const bool req = g.needs_grad(x, w, b);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [x, w, b, o, s, c, h, wd, k, ho, wo] {
      const auto& dy = o->grad;
      Tensor<T>* dx = x->requires_grad ? &x->g() : nullptr;
      Tensor<T>* dw = w->requires_grad ? &w->g() : nullptr;
      for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.channel(ch);
        const T* ker = w->value.ptr() + static_cast<std::size_t>(ch) * k * k;
        const T* gy = dy.channel(ch);
        T* gx = dx ? dx->channel(ch) : nullptr;
        T* gk = dw ? dw->ptr() + static_cast<std::size_t>(ch) * k * k : nullptr;
        T gb = 0;
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const T d = gy[oy * wo + ox];
            gb += d;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * s.stride - s.pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * s.stride - s.pad + kx;
                if (ix < 0 || ix >= wd) continue;
                if (gk) gk[ky * k + kx] += d * src[iy * wd + ix];
                if (gx) gx[iy * wd + ix] += d * ker[ky * k + kx];
              }
            }
          }
        }
        if (b && b->requires_grad) b->g()[ch] += gb;
      }
    };
  }
  return o;
}

}  // namespace detail

/// 2-D convolution. Weight shape is (C_out, C_in / groups, k, k); `bias` may be
/// null. Dense (groups = 1) and depthwise (groups = C_in = C_out) are supported.
template <class T>
Var<T> conv2d(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b, ConvSpec s = {}) {
  if (w->value.rank() != 4 || w->value.dim(2) != w->value.dim(3))
    throw ShapeError("conv2d: weight must be (C_out, C_in/groups, k, k)");
  if (b && static_cast<int>(b->value.size()) != w->value.dim(0))
    throw ShapeError("conv2d: bias size mismatch");
  if (s.groups == 1) return detail::conv_dense(g, x, w, b, s);
  const int c = x->value.channels();
  if (s.groups == c && w->value.dim(0) == c && w->value.dim(1) == 1)
    return detail::conv_depthwise(g, x, w, b, s);
  throw ShapeError("conv2d: only dense and depthwise grouping are supported");
}

// ---------------------------------------------------------------------------
// Channel ("transposed") attention

/// Multi-head attention across channels. For each head the d x N query and key
/// matrices (d = C / heads, N = H * W) are L2-normalised along N, the d x d map
/// softmax(temperature * q k^T) is formed with the softmax over the last axis,
/// and applied to the values. If `weights_out` is given it receives the
/// attention maps (one d*d row-major block per head).
template <class T>
Var<T> channel_attention(Graph<T>& g, Var<T> q, Var<T> k, Var<T> v, Var<T> temperature, int heads,
                         std::vector<T>* weights_out = nullptr) {
  require_shape(q->value, k->value, "channel_attention");
  require_shape(q->value, v->value, "channel_attention");
  const int c = q->value.channels();
  if (heads <= 0 || c % heads != 0) throw ShapeError("channel_attention: heads must divide channels");
  if (static_cast<int>(temperature->value.size()) != heads)
    throw ShapeError("channel_attention: one temperature per head expected");
  const int d = c / heads;
  const Eigen::Index n = q->value.plane();
  constexpr T kEps = T(1e-12);

  struct HeadCache {
    MatrixR<T> qn, kn, attn;
    Eigen::Matrix<T, Eigen::Dynamic, 1> q_norm, k_norm;
  };
  std::vector<HeadCache> cache(static_cast<std::size_t>(heads));
  Tensor<T> out(q->value.shape());
  if (weights_out) weights_out->clear();

  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * d * n;
    ConstMatMap<T> qm(q->value.ptr() + off, d, n);
    ConstMatMap<T> km(k->value.ptr() + off, d, n);
    ConstMatMap<T> vm(v->value.ptr() + off, d, n);
    auto& hc = cache[static_cast<std::size_t>(h)];
    hc.q_norm = qm.rowwise().norm().cwiseMax(kEps);
    hc.k_norm = km.rowwise().norm().cwiseMax(kEps);
    hc.qn = hc.q_norm.cwiseInverse().asDiagonal() * qm;
    hc.kn = hc.k_norm.cwiseInverse().asDiagonal() * km;
    MatrixR<T> logits = temperature->value[h] * (hc.qn * hc.kn.transpose());
    for (int r = 0; r < d; ++r) {
      const T mx = logits.row(r).maxCoeff();
      logits.row(r) = (logits.row(r).array() - mx).exp();
      logits.row(r) /= logits.row(r).sum();
    }
    hc.attn = std::move(logits);
    MatMap<T> om(out.ptr() + off, d, n);
    om.noalias() = hc.attn * vm;
    if (weights_out) weights_out->insert(weights_out->end(), hc.attn.data(), hc.attn.data() + d * d);
  }

  const bool req = g.needs_grad(q, k, v, temperature);
  Var<T> o = g.record(std::move(out), req, nullptr);
  if (req) {
    o->backward = [q, k, v, temperature, o, heads, d, n, cache = std::move(cache)] {
      for (int h = 0; h < heads; ++h) {
        const auto& hc = cache[static_cast<std::size_t>(h)];
        const std::size_t off = static_cast<std::size_t>(h) * d * n;
        ConstMatMap<T> dout(o->grad.ptr() + off, d, n);
        ConstMatMap<T> vm(v->value.ptr() + off, d, n);
        if (v->requires_grad) {
          MatMap<T> dv(v->g().ptr() + off, d, n);
          dv.noalias() += hc.attn.transpose() * dout;
        }
        MatrixR<T> da = dout * vm.transpose();
        // softmax backward, row-wise
        MatrixR<T> ds = hc.attn.cwiseProduct(da);
        for (int r = 0; r < d; ++r) {
          const T dot = ds.row(r).sum();
          ds.row(r) -= hc.attn.row(r) * dot;
        }
        const T t = temperature->value[h];
        if (temperature->requires_grad) {
          MatrixR<T> gram = hc.qn * hc.kn.transpose();
          temperature->g()[h] += ds.cwiseProduct(gram).sum();
        }
        auto normalize_back = [&](const MatrixR<T>& unit, const auto& norms, const MatrixR<T>& dunit,
                                  T* dst) {
          MatMap<T> dm(dst, d, n);
          for (int r = 0; r < d; ++r) {
            const T proj = unit.row(r).dot(dunit.row(r));
            dm.row(r) += (dunit.row(r) - unit.row(r) * proj) / norms[r];
          }
        };
        if (q->requires_grad) {
          MatrixR<T> dqn = t * (ds * hc.kn);
          normalize_back(hc.qn, hc.q_norm, dqn, q->g().ptr() + off);
        }
        if (k->requires_grad) {
          MatrixR<T> dkn = t * (ds.transpose() * hc.qn);
          normalize_back(hc.kn, hc.k_norm, dkn, k->g().ptr() + off);
        }
      }
    };
  }
  return o;
}

}  // namespace uietl::ops
