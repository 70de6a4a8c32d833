#pragma once

#include <Eigen/Core>
#include <array>

#include "layerfield/tape.hpp"

namespace lf {

struct BBox {
  Eigen::Vector3d min = Eigen::Vector3d(-1, -1, -1);
  Eigen::Vector3d max = Eigen::Vector3d(1, 1, 1);

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Eigen::Vector3d normalized(const Eigen::Vector3d& p) const {
    return (p - min).cwiseQuotient(max - min);
  }
};

enum class PlaneId { UV = 0, UW = 1, WV = 2 };

// Three axis-aligned feature planes over a canonical bounding box. Each plane
// is [H, W, C]; with shift enabled the channels split into three sub-planes
// sampled at half-texel offsets, which subdivides the effective grid without
// adding parameters.
template <typename T>
struct TriPlane {
  std::array<Tensor<T>, 3> planes;  // x_uv, x_uw, x_wv
  bool shift_enabled = false;
  BBox bbox;

  TriPlane() = default;
  TriPlane(int64_t h, int64_t w, int64_t c, bool shift, BBox box = {})
      : shift_enabled(shift), bbox(box) {
    require(!shift || c % 3 == 0, "TriPlane: shift needs channels divisible by 3");
    for (auto& p : planes) p = Tensor<T>::zeros({h, w, c});
  }

  int64_t height() const { return planes[0].shape[0]; }
  int64_t width() const { return planes[0].shape[1]; }
  int64_t channels() const { return planes[0].shape[2]; }
  int64_t feature_dim() const { return 3 * channels(); }
  int64_t param_count() const { return 3 * planes[0].numel(); }
};

// Orthogonal projection: drop the plane's orthogonal axis, normalize the
// rest by the bbox extents. Returns (u, v) in [0,1]^2 when inside.
inline std::pair<double, double> project_point(const BBox& box, const Eigen::Vector3d& p,
                                               PlaneId plane) {
  const Eigen::Vector3d n = box.normalized(p);
  switch (plane) {
    case PlaneId::UV: return {n.x(), n.y()};
    case PlaneId::UW: return {n.x(), n.z()};
    default: return {n.z(), n.y()};
  }
}

// Bilinear sample of channels [c0,c1) at continuous grid position
// (u*(W-1)+du, v*(H-1)+dv), clamped to the edge. Plain (tapeless) version.
template <typename T>
void sample_plane_into(const Tensor<T>& plane, double u, double v, double du, double dv,
                       int64_t c0, int64_t c1, T* out) {
  const int64_t h = plane.shape[0], w = plane.shape[1], c = plane.shape[2];
  double x = u * double(w - 1) + du;
  double y = v * double(h - 1) + dv;
  x = std::min(std::max(x, 0.0), double(w - 1));
  y = std::min(std::max(y, 0.0), double(h - 1));
  const int64_t x0 = std::min(int64_t(x), std::max<int64_t>(w - 2, 0));
  const int64_t y0 = std::min(int64_t(y), std::max<int64_t>(h - 2, 0));
  const int64_t x1 = std::min(x0 + 1, w - 1);
  const int64_t y1 = std::min(y0 + 1, h - 1);
  const T fx = T(x - double(x0)), fy = T(y - double(y0));
  const T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy);
  const T w10 = (T(1) - fx) * fy, w11 = fx * fy;
  const T* d = plane.data.data();
  for (int64_t ch = c0; ch < c1; ++ch)
    out[ch - c0] = w00 * d[(y0 * w + x0) * c + ch] + w01 * d[(y0 * w + x1) * c + ch] +
                   w10 * d[(y1 * w + x0) * c + ch] + w11 * d[(y1 * w + x1) * c + ch];
}

template <typename T>
std::vector<T> sample_plane(const Tensor<T>& plane, double u, double v, double du = 0,
                            double dv = 0) {
  std::vector<T> out(size_t(plane.shape[2]));
  sample_plane_into(plane, u, v, du, dv, 0, plane.shape[2], out.data());
  return out;
}

namespace detail {

// Sub-plane channel split is contiguous; offsets follow the half-texel
// shift: thirds sampled at (0,0), (+0.5,0), (0,+0.5).
inline constexpr double kShiftDu[3] = {0.0, 0.5, 0.0};
inline constexpr double kShiftDv[3] = {0.0, 0.0, 0.5};

}  // namespace detail

// Full tri-plane feature lookup for one point: concat of the three planes'
// samples (3C values). Out-of-bbox points yield the zero vector.
template <typename T>
std::vector<T> sample_features(const TriPlane<T>& tp, const Eigen::Vector3d& point) {
  const int64_t c = tp.channels();
  std::vector<T> out(size_t(3 * c), T(0));
  if (!tp.bbox.contains(point)) return out;
  for (int pl = 0; pl < 3; ++pl) {
    auto [u, v] = project_point(tp.bbox, point, PlaneId(pl));
    T* dst = out.data() + pl * c;
    if (!tp.shift_enabled) {
      sample_plane_into(tp.planes[size_t(pl)], u, v, 0.0, 0.0, 0, c, dst);
    } else {
      const int64_t sub = c / 3;
      for (int s = 0; s < 3; ++s)
        sample_plane_into(tp.planes[size_t(pl)], u, v, detail::kShiftDu[s], detail::kShiftDv[s],
                          s * sub, (s + 1) * sub, dst + s * sub);
    }
  }
  return out;
}

// Differentiable batched version: gathers features for all points from the
// three plane Vars and returns [P, 3C]. Rows for out-of-bbox points are
// exactly zero.
template <typename T>
Var<T> sample_features_batch(const std::array<Var<T>, 3>& plane_vars, const BBox& bbox,
                             bool shift, const std::vector<Eigen::Vector3d>& points) {
  require(plane_vars[0].valid(), "sample_features_batch: invalid plane vars");
  const int64_t c = plane_vars[0].shape()[2];
  const int64_t p = int64_t(points.size());
  const int64_t h = plane_vars[0].shape()[0], w = plane_vars[0].shape()[1];

  std::vector<T> inside(static_cast<size_t>(p), T(0));
  std::array<std::vector<double>, 3> xy;
  for (auto& v : xy) v.resize(size_t(2 * p));
  for (int64_t i = 0; i < p; ++i) {
    const bool in = bbox.contains(points[size_t(i)]);
    inside[size_t(i)] = in ? T(1) : T(0);
    for (int pl = 0; pl < 3; ++pl) {
      auto [u, v] = project_point(bbox, points[size_t(i)], PlaneId(pl));
      xy[size_t(pl)][size_t(2 * i)] = u * double(w - 1);
      xy[size_t(pl)][size_t(2 * i + 1)] = v * double(h - 1);
    }
  }

  auto gather_plane = [&](int pl) {
    if (!shift) return bilinear_gather(plane_vars[size_t(pl)], xy[size_t(pl)], 0, c);
    const int64_t sub = c / 3;
    Var<T> parts[3];
    for (int s = 0; s < 3; ++s) {
      std::vector<double> shifted = xy[size_t(pl)];
      for (int64_t i = 0; i < p; ++i) {
        shifted[size_t(2 * i)] += detail::kShiftDu[s];
        shifted[size_t(2 * i + 1)] += detail::kShiftDv[s];
      }
      parts[s] = bilinear_gather(plane_vars[size_t(pl)], shifted, s * sub, (s + 1) * sub);
    }
    return concat_cols(concat_cols(parts[0], parts[1]), parts[2]);
  };

  Var<T> feats = concat_cols(concat_cols(gather_plane(0), gather_plane(1)), gather_plane(2));
  bool any_outside = false;
  for (T v : inside)
    if (v == T(0)) any_outside = true;
  if (any_outside) feats = scale_rows_const(feats, std::move(inside));
  return feats;
}

// Total variation of a plane: L1 of adjacent differences along width and
// height, divided by the number of features in the plane.
template <typename T>
Var<T> plane_tv_l1(Var<T> plane) {
  Tape<T>& tp = *plane.tape;
  require(plane.shape().size() == 3, "plane_tv_l1: want [H,W,C]");
  const int64_t h = plane.shape()[0], w = plane.shape()[1], c = plane.shape()[2];
  const T inv_n = T(1) / T(h * w * c);
  const auto& pv = plane.value().data;
  T acc = T(0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w - 1; ++x)
      for (int64_t ch = 0; ch < c; ++ch)
        acc += std::abs(pv[size_t((y * w + x + 1) * c + ch)] - pv[size_t((y * w + x) * c + ch)]);
  for (int64_t y = 0; y < h - 1; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch)
        acc += std::abs(pv[size_t(((y + 1) * w + x) * c + ch)] - pv[size_t((y * w + x) * c + ch)]);
  const bool rg = tp.requires_grad(plane.id);
  Var<T> o = tp.push(Tensor<T>::scalar(acc * inv_n), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int pi = plane.id, oi = o.id;
    tp.set_backward(o, [t, pi, oi, h, w, c, inv_n] {
      const T g = t->grad_buf(oi)[0] * inv_n;
      const auto& pv2 = t->value(pi).data;
      auto& gp = t->grad_buf(pi);
      auto kick = [&](int64_t lo, int64_t hi) {
        const T d = pv2[size_t(hi)] - pv2[size_t(lo)];
        const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        gp[size_t(hi)] += g * s;
        gp[size_t(lo)] -= g * s;
      };
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w - 1; ++x)
          for (int64_t ch = 0; ch < c; ++ch)
            kick((y * w + x) * c + ch, (y * w + x + 1) * c + ch);
      for (int64_t y = 0; y < h - 1; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int64_t ch = 0; ch < c; ++ch)
            kick((y * w + x) * c + ch, ((y + 1) * w + x) * c + ch);
    });
  }
  return o;
}

// Sum of the per-plane TV terms.
template <typename T>
Var<T> tv_loss(const std::array<Var<T>, 3>& plane_vars) {
  return add(add(plane_tv_l1(plane_vars[0]), plane_tv_l1(plane_vars[1])),
             plane_tv_l1(plane_vars[2]));
}

// Mean absolute feature value per plane, summed over the three planes.
template <typename T>
Var<T> sparsity_loss(const std::array<Var<T>, 3>& plane_vars) {
  Var<T> total;
  for (int pl = 0; pl < 3; ++pl) {
    Var<T> m = mean(abs(plane_vars[size_t(pl)]));
    total = pl == 0 ? m : add(total, m);
  }
  return total;
}

// Convenience: evaluate both regularizers on a plain tri-plane.
template <typename T>
T tv_loss_value(const TriPlane<T>& tp) {
  Tape<T> tape;
  std::array<Var<T>, 3> vars;
  for (int i = 0; i < 3; ++i) vars[size_t(i)] = tape.constant(tp.planes[size_t(i)]);
  return tv_loss(vars).value()[0];
}

template <typename T>
T sparsity_loss_value(const TriPlane<T>& tp) {
  Tape<T> tape;
  std::array<Var<T>, 3> vars;
  for (int i = 0; i < 3; ++i) vars[size_t(i)] = tape.constant(tp.planes[size_t(i)]);
  return sparsity_loss(vars).value()[0];
}

// --- stacked tensor form for diffusion --------------------------------------

// Stack the three planes channel-wise into one [H, W, 3C] tensor.
template <typename T>
Tensor<T> triplane_to_tensor(const TriPlane<T>& tp) {
  const int64_t h = tp.height(), w = tp.width(), c = tp.channels();
  Tensor<T> out({h, w, 3 * c});
  for (int pl = 0; pl < 3; ++pl)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch)
          out.at(y, x, pl * c + ch) = tp.planes[size_t(pl)].at(y, x, ch);
  return out;
}

template <typename T>
TriPlane<T> triplane_from_tensor(const Tensor<T>& t, bool shift, BBox bbox) {
  require(t.rank() == 3 && t.shape[2] % 3 == 0, "triplane_from_tensor: want [H,W,3C]");
  const int64_t h = t.shape[0], w = t.shape[1], c = t.shape[2] / 3;
  TriPlane<T> tp(h, w, c, shift, bbox);
  for (int pl = 0; pl < 3; ++pl)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch)
          tp.planes[size_t(pl)].at(y, x, ch) = t.at(y, x, pl * c + ch);
  return tp;
}

}  // namespace lf
