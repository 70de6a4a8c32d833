#pragma once

#include <Eigen/Core>

#include <memory>

#include "layerfield/tape.hpp"

namespace lf {

// Ops over [N,C,H,W] activations for the 2D UNet. Convolution is im2col +
// GEMM; batches stay small at tri-plane resolutions so per-item loops are
// fine.

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride = 1, int pad = 1) {
  using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tape<T>& tp = *x.tape;
  require(x.shape().size() == 4 && w.shape().size() == 4, "conv2d: want x[N,C,H,W], w[Co,Ci,kh,kw]");
  const int64_t n = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
  const int64_t co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  require(w.shape()[1] == ci, "conv2d: channel mismatch");
  require(b.value().numel() == co, "conv2d: bias size mismatch");
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output would be empty");

  const int64_t kdim = ci * kh * kw;
  auto im2col = [=](const T* img, T* col) {
    // col is [kdim, ho*wo]
    for (int64_t c = 0; c < ci; ++c)
      for (int64_t ky = 0; ky < kh; ++ky)
        for (int64_t kx = 0; kx < kw; ++kx) {
          T* dst = col + ((c * kh + ky) * kw + kx) * ho * wo;
          for (int64_t oy = 0; oy < ho; ++oy) {
            const int64_t iy = oy * stride + ky - pad;
            for (int64_t ox = 0; ox < wo; ++ox) {
              const int64_t ix = ox * stride + kx - pad;
              dst[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                                      ? img[(c * h + iy) * wd + ix]
                                      : T(0);
            }
          }
        }
  };

  Tensor<T> out({n, co, ho, wo});
  std::vector<T> col(size_t(kdim * ho * wo));
  const auto& xv = x.value().data;
  const auto& wv = w.value().data;
  const auto& bv = b.value().data;
  for (int64_t item = 0; item < n; ++item) {
    im2col(&xv[size_t(item * ci * h * wd)], col.data());
    Eigen::Map<const EigenMat> W(wv.data(), co, kdim);
    Eigen::Map<const EigenMat> C(col.data(), kdim, ho * wo);
    Eigen::Map<EigenMat> O(&out.data[size_t(item * co * ho * wo)], co, ho * wo);
    O.noalias() = W * C;
    for (int64_t oc = 0; oc < co; ++oc) O.row(oc).array() += bv[size_t(oc)];
  }

  const bool rg = tp.requires_grad(x.id) || tp.requires_grad(w.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, wi = w.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [=] {
      const auto& g = t->grad_buf(oi);
      const auto& xv2 = t->value(xi).data;
      const auto& wv2 = t->value(wi).data;
      std::vector<T> colb(size_t(kdim * ho * wo));
      const bool need_x = t->requires_grad(xi);
      const bool need_w = t->requires_grad(wi);
      const bool need_b = t->requires_grad(bi);
      for (int64_t item = 0; item < n; ++item) {
        Eigen::Map<const EigenMat> G(&g[size_t(item * co * ho * wo)], co, ho * wo);
        if (need_b) {
          auto& gb = t->grad_buf(bi);
          for (int64_t oc = 0; oc < co; ++oc) gb[size_t(oc)] += G.row(oc).sum();
        }
        if (need_w) {
          im2col(&xv2[size_t(item * ci * h * wd)], colb.data());
          Eigen::Map<const EigenMat> C(colb.data(), kdim, ho * wo);
          Eigen::Map<EigenMat> GW(t->grad_buf(wi).data(), co, kdim);
          GW.noalias() += G * C.transpose();
        }
        if (need_x) {
          Eigen::Map<const EigenMat> W(wv2.data(), co, kdim);
          Eigen::Map<EigenMat> GC(colb.data(), kdim, ho * wo);
          GC.noalias() = W.transpose() * G;
          // col2im scatter-add
          auto& gx = t->grad_buf(xi);
          T* gimg = &gx[size_t(item * ci * h * wd)];
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const T* src = colb.data() + ((c * kh + ky) * kw + kx) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                  const int64_t iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int64_t ox = 0; ox < wo; ++ox) {
                    const int64_t ix = ox * stride + kx - pad;
                    if (ix >= 0 && ix < wd) gimg[(c * h + iy) * wd + ix] += src[oy * wo + ox];
                  }
                }
              }
        }
      }
    });
  }
  return o;
}

template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
  Tape<T>& tp = *x.tape;
  require(x.shape().size() == 4, "upsample_nearest2: want [N,C,H,W]");
  const int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out({n, c, 2 * h, 2 * w});
  const auto& xv = x.value().data;
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx) {
        const T v = xv[size_t((nc * h + y) * w + xx)];
        T* base = &out.data[size_t((nc * 2 * h + 2 * y) * 2 * w + 2 * xx)];
        base[0] = v;
        base[1] = v;
        base[2 * w] = v;
        base[2 * w + 1] = v;
      }
  const bool rg = tp.requires_grad(x.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, oi = o.id;
    tp.set_backward(o, [t, xi, oi, n, c, h, w] {
      const auto& g = t->grad_buf(oi);
      auto& gx = t->grad_buf(xi);
      for (int64_t nc = 0; nc < n * c; ++nc)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t xx = 0; xx < w; ++xx) {
            const T* base = &g[size_t((nc * 2 * h + 2 * y) * 2 * w + 2 * xx)];
            gx[size_t((nc * h + y) * w + xx)] += base[0] + base[1] + base[2 * w] + base[2 * w + 1];
          }
    });
  }
  return o;
}

// GroupNorm over [N,C,H,W]: normalize within each (item, channel group),
// then per-channel affine.
template <typename T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, T eps = T(1e-5)) {
  Tape<T>& tp = *x.tape;
  require(x.shape().size() == 4, "group_norm: want [N,C,H,W]");
  const int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  require(groups > 0 && c % groups == 0, "group_norm: groups must divide channels");
  require(gamma.value().numel() == c && beta.value().numel() == c, "group_norm: affine size");
  const int64_t cg = c / groups, m = cg * h * w, hw = h * w;

  auto mu = std::make_shared<std::vector<T>>(size_t(n * groups));
  auto istd = std::make_shared<std::vector<T>>(size_t(n * groups));
  Tensor<T> out(x.shape());
  const auto& xv = x.value().data;
  const auto& gv = gamma.value().data;
  const auto& bv = beta.value().data;
  for (int64_t item = 0; item < n; ++item)
    for (int64_t gidx = 0; gidx < groups; ++gidx) {
      const int64_t base = (item * c + gidx * cg) * hw;
      T s = T(0), s2 = T(0);
      for (int64_t i = 0; i < m; ++i) {
        const T v = xv[size_t(base + i)];
        s += v;
        s2 += v * v;
      }
      const T mean_v = s / T(m);
      const T var_v = std::max(s2 / T(m) - mean_v * mean_v, T(0));
      const T is = T(1) / std::sqrt(var_v + eps);
      (*mu)[size_t(item * groups + gidx)] = mean_v;
      (*istd)[size_t(item * groups + gidx)] = is;
      for (int64_t cc = 0; cc < cg; ++cc) {
        const int64_t ch = gidx * cg + cc;
        const T ga = gv[size_t(ch)], be = bv[size_t(ch)];
        const int64_t cb = (item * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i)
          out.data[size_t(cb + i)] = (xv[size_t(cb + i)] - mean_v) * is * ga + be;
      }
    }
  const bool rg = tp.requires_grad(x.id) || tp.requires_grad(gamma.id) || tp.requires_grad(beta.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, gi = gamma.id, bi = beta.id, oi = o.id;
    tp.set_backward(o, [=] {
      const auto& g = t->grad_buf(oi);
      const auto& xv2 = t->value(xi).data;
      const auto& gv2 = t->value(gi).data;
      const bool need_x = t->requires_grad(xi);
      const bool need_g = t->requires_grad(gi);
      const bool need_b = t->requires_grad(bi);
      for (int64_t item = 0; item < n; ++item)
        for (int64_t gidx = 0; gidx < groups; ++gidx) {
          const T mean_v = (*mu)[size_t(item * groups + gidx)];
          const T is = (*istd)[size_t(item * groups + gidx)];
          // accumulate affine grads and the two reduction terms
          T s1 = T(0), s2 = T(0);
          for (int64_t cc = 0; cc < cg; ++cc) {
            const int64_t ch = gidx * cg + cc;
            const int64_t cb = (item * c + ch) * hw;
            const T ga = gv2[size_t(ch)];
            T dg = T(0), db = T(0);
            for (int64_t i = 0; i < hw; ++i) {
              const T xhat = (xv2[size_t(cb + i)] - mean_v) * is;
              const T go = g[size_t(cb + i)];
              dg += go * xhat;
              db += go;
              const T dxhat = go * ga;
              s1 += dxhat;
              s2 += dxhat * xhat;
            }
            if (need_g) t->grad_buf(gi)[size_t(ch)] += dg;
            if (need_b) t->grad_buf(bi)[size_t(ch)] += db;
          }
          if (need_x) {
            auto& gx = t->grad_buf(xi);
            const T inv_m = T(1) / T(m);
            for (int64_t cc = 0; cc < cg; ++cc) {
              const int64_t ch = gidx * cg + cc;
              const int64_t cb = (item * c + ch) * hw;
              const T ga = gv2[size_t(ch)];
              for (int64_t i = 0; i < hw; ++i) {
                const T xhat = (xv2[size_t(cb + i)] - mean_v) * is;
                const T dxhat = g[size_t(cb + i)] * ga;
                gx[size_t(cb + i)] += is * (dxhat - inv_m * s1 - xhat * inv_m * s2);
              }
            }
          }
        }
    });
  }
  return o;
}

// x[N,C,H,W] + per-(item, channel) bias e[N,C]; the time-embedding injection.
template <typename T>
Var<T> add_chan_bias(Var<T> x, Var<T> e) {
  Tape<T>& tp = detail::tape_of(x, e);
  require(x.shape().size() == 4 && e.shape().size() == 2 && e.shape()[0] == x.shape()[0] &&
              e.shape()[1] == x.shape()[1],
          "add_chan_bias: want x[N,C,H,W], e[N,C]");
  const int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  Tensor<T> out(x.shape());
  const auto& xv = x.value().data;
  const auto& ev = e.value().data;
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T b = ev[size_t(nc)];
    for (int64_t i = 0; i < hw; ++i) out.data[size_t(nc * hw + i)] = xv[size_t(nc * hw + i)] + b;
  }
  const bool rg = tp.requires_grad(x.id) || tp.requires_grad(e.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, ei = e.id, oi = o.id;
    tp.set_backward(o, [t, xi, ei, oi, n, c, hw] {
      const auto& g = t->grad_buf(oi);
      if (t->requires_grad(xi)) {
        auto& gx = t->grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (t->requires_grad(ei)) {
        auto& ge = t->grad_buf(ei);
        for (int64_t nc = 0; nc < n * c; ++nc) {
          T acc = T(0);
          for (int64_t i = 0; i < hw; ++i) acc += g[size_t(nc * hw + i)];
          ge[size_t(nc)] += acc;
        }
      }
    });
  }
  return o;
}

template <typename T>
Var<T> concat_chan(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  require(a.shape().size() == 4 && b.shape().size() == 4 && a.shape()[0] == b.shape()[0] &&
              a.shape()[2] == b.shape()[2] && a.shape()[3] == b.shape()[3],
          "concat_chan: want [N,C1,H,W],[N,C2,H,W]");
  const int64_t n = a.shape()[0], c1 = a.shape()[1], c2 = b.shape()[1];
  const int64_t hw = a.shape()[2] * a.shape()[3];
  Tensor<T> out({n, c1 + c2, a.shape()[2], a.shape()[3]});
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (int64_t item = 0; item < n; ++item) {
    std::copy_n(&av[size_t(item * c1 * hw)], size_t(c1 * hw),
                &out.data[size_t(item * (c1 + c2) * hw)]);
    std::copy_n(&bv[size_t(item * c2 * hw)], size_t(c2 * hw),
                &out.data[size_t((item * (c1 + c2) + c1) * hw)]);
  }
  const bool rg = tp.requires_grad(a.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, ai, bi, oi, n, c1, c2, hw] {
      const auto& g = t->grad_buf(oi);
      if (t->requires_grad(ai)) {
        auto& ga = t->grad_buf(ai);
        for (int64_t item = 0; item < n; ++item)
          for (int64_t i = 0; i < c1 * hw; ++i)
            ga[size_t(item * c1 * hw + i)] += g[size_t(item * (c1 + c2) * hw + i)];
      }
      if (t->requires_grad(bi)) {
        auto& gb = t->grad_buf(bi);
        for (int64_t item = 0; item < n; ++item)
          for (int64_t i = 0; i < c2 * hw; ++i)
            gb[size_t(item * c2 * hw + i)] += g[size_t((item * (c1 + c2) + c1) * hw + i)];
      }
    });
  }
  return o;
}

}  // namespace lf
