#pragma once

#include <optional>

#include "layerfield/body.hpp"
#include "layerfield/camera.hpp"
#include "layerfield/decoder.hpp"
#include "layerfield/image.hpp"
#include "layerfield/sampling.hpp"
#include "layerfield/triplane.hpp"

namespace lf {

struct RenderConfig {
  int n_coarse = 128;
  int n_fine = 128;
  int l_feat = 2;  // encoding frequencies for tri-plane features
  int l_dir = 4;   // and for view directions
  DensityActivation density_act = DensityActivation::kShiftedSoftplus;
  double density_shift = -1.0;
  Eigen::Vector3d background = Eigen::Vector3d(1, 1, 1);

  void validate() const { require(n_coarse > 0 && n_fine >= 0, "render config: counts"); }
};

template <typename T>
MlpDecoder<T> make_decoder(const RenderConfig& cfg, int hidden, int feature_dim, Rng& rng) {
  MlpDecoder<T> d;
  d.hidden = hidden;
  d.feature_dim = feature_dim;
  d.l_feat = cfg.l_feat;
  d.l_dir = cfg.l_dir;
  d.density_act = cfg.density_act;
  d.density_shift = T(cfg.density_shift);
  d.init(rng);
  return d;
}

// --- discrete volume rendering ----------------------------------------------

// alpha_i = 1 - exp(-sigma_i * delta_i); T_i = prod_{j<i}(1 - alpha_j);
// rgb = sum T_i alpha_i c_i + leftover transmittance * background;
// mask = sum T_i alpha_i (the accumulated opacity).
struct CompositeResult {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  double mask = 0;
  std::vector<double> weights;  // T_i * alpha_i
};

inline CompositeResult composite(const std::vector<Eigen::Vector3d>& colors,
                                 const std::vector<double>& sigmas,
                                 const std::vector<double>& deltas,
                                 const Eigen::Vector3d& background) {
  require(colors.size() == sigmas.size() && sigmas.size() == deltas.size(),
          "composite: length mismatch");
  CompositeResult out;
  out.weights.resize(sigmas.size());
  double trans = 1.0;
  for (size_t i = 0; i < sigmas.size(); ++i) {
    require(deltas[i] >= 0, "composite: negative delta");
    const double alpha = 1.0 - std::exp(-sigmas[i] * deltas[i]);
    const double w = trans * alpha;
    out.weights[i] = w;
    out.rgb += w * colors[i];
    out.mask += w;
    trans *= 1.0 - alpha;
  }
  out.rgb += (1.0 - out.mask) * background;
  return out;
}

// --- sampling plan ------------------------------------------------------------

// Depth samples, canonical-space points and encoded directions for a batch
// of rays, produced ahead of the differentiable pass. Fine-sample depths come
// from the coarse pass and are treated as constants with respect to the
// parameters (as is the compositing geometry).
template <typename T>
struct RayBatchPlan {
  int64_t n_rays = 0;           // rays that hit the bounds
  int64_t samples_per_ray = 0;  // n_coarse + n_fine
  std::vector<int> ray_indices;  // positions of planned rays in the input batch
  std::vector<T> deltas;                  // [n_rays * S]
  std::vector<Eigen::Vector3d> points;    // canonical space, [n_rays * S]
  Tensor<T> dir_enc;                      // [n_rays * S, 3*(1+2*l_dir)]
};

namespace detail {

template <typename T>
void encode_dir_row(const Eigen::Vector3d& d, int l_dir, T* row) {
  int idx = 0;
  for (int a = 0; a < 3; ++a) row[idx++] = T(d[a]);
  for (int l = 0; l < l_dir; ++l) {
    const double freq = M_PI * double(int64_t(1) << l);
    for (int a = 0; a < 3; ++a) {
      row[idx++] = T(std::sin(freq * d[a]));
      row[idx++] = T(std::cos(freq * d[a]));
    }
  }
}

}  // namespace detail

// Plain (non-differentiable) decode of a point batch, used for the coarse
// pass and reference evaluation. Returns per-point sigma and rgb.
template <typename T>
void decode_points_plain(const TriPlane<T>& tp, const MlpDecoder<T>& dec,
                         const std::vector<Eigen::Vector3d>& points,
                         const std::vector<Eigen::Vector3d>& dirs, std::vector<double>& sigma,
                         std::vector<Eigen::Vector3d>& rgb) {
  const int64_t n = int64_t(points.size());
  sigma.assign(size_t(n), 0.0);
  rgb.assign(size_t(n), Eigen::Vector3d::Zero());
  if (n == 0) return;
  Tape<T> tape;
  std::array<Var<T>, 3> planes;
  for (int i = 0; i < 3; ++i) planes[size_t(i)] = tape.constant(tp.planes[size_t(i)]);
  DecoderVars<T> dv;
  for (auto& [name, p] : const_cast<MlpDecoder<T>&>(dec).params())
    dv.vars.emplace(name, tape.constant(*p));
  Var<T> feats = sample_features_batch(planes, tp.bbox, tp.shift_enabled, points);
  Tensor<T> de({n, dec.encoded_dir_dim()});
  for (int64_t i = 0; i < n; ++i)
    detail::encode_dir_row(dirs[size_t(i)], dec.l_dir, &de.data[size_t(i * dec.encoded_dir_dim())]);
  auto outs = decode_batch(tape, dec, dv, feats, tape.constant(std::move(de)));
  for (int64_t i = 0; i < n; ++i) {
    sigma[size_t(i)] = double(outs.sigma.value()[i]);
    for (int a = 0; a < 3; ++a) rgb[size_t(i)][a] = double(outs.rgb.value().at(i, a));
  }
}

// Build the union sampling plan for a ray batch: stratified coarse samples,
// a coarse pass for importance weights when n_fine > 0, inverse-CDF fine
// samples, then the merged per-ray depth list warped into canonical space.
// stream_ids give each ray a stable RNG stream so chunking cannot change
// the result.
template <typename T>
RayBatchPlan<T> plan_ray_batch(const std::vector<Ray>& rays, const TriPlane<T>& tp,
                               const MlpDecoder<T>& dec, const RenderConfig& cfg,
                               const Pose* pose, const Skeleton* skel, const Rng& base_rng,
                               const std::vector<uint64_t>& stream_ids) {
  cfg.validate();
  require(stream_ids.size() == rays.size(), "plan_ray_batch: one stream id per ray");
  RayBatchPlan<T> plan;
  std::vector<std::vector<double>> coarse(rays.size());
  for (size_t i = 0; i < rays.size(); ++i) {
    if (!rays[i].hits_bounds) continue;
    Rng rng = base_rng.fork(stream_ids[i]);
    coarse[i] = stratified_samples(rays[i].t_near, rays[i].t_far, cfg.n_coarse, rng);
    plan.ray_indices.push_back(int(i));
  }
  plan.n_rays = int64_t(plan.ray_indices.size());
  plan.samples_per_ray = cfg.n_coarse + cfg.n_fine;
  const int64_t s = plan.samples_per_ray;
  if (plan.n_rays == 0) {
    plan.dir_enc = Tensor<T>({0, dec.encoded_dir_dim()});
    return plan;
  }

  std::optional<std::vector<Eigen::Isometry3d>> transforms;
  if (pose && skel) transforms = joint_transforms(*skel, *pose);
  auto to_canonical = [&](const Eigen::Vector3d& p_obs) {
    return transforms ? lbs_inverse(p_obs, *pose, *skel, *transforms) : p_obs;
  };

  // Coarse pass for importance weights.
  std::vector<std::vector<double>> fine(rays.size());
  if (cfg.n_fine > 0) {
    std::vector<Eigen::Vector3d> cpoints, cdirs;
    cpoints.reserve(size_t(plan.n_rays) * size_t(cfg.n_coarse));
    for (int ri : plan.ray_indices) {
      const Ray& r = rays[size_t(ri)];
      for (double t : coarse[size_t(ri)]) {
        cpoints.push_back(to_canonical(r.origin + t * r.dir));
        cdirs.push_back(r.dir);
      }
    }
    std::vector<double> csigma;
    std::vector<Eigen::Vector3d> crgb;
    decode_points_plain(tp, dec, cpoints, cdirs, csigma, crgb);
    int64_t cursor = 0;
    for (int ri : plan.ray_indices) {
      const Ray& r = rays[size_t(ri)];
      const auto& depths = coarse[size_t(ri)];
      std::vector<double> sig(depths.size()), del(depths.size());
      std::vector<Eigen::Vector3d> col(depths.size(), Eigen::Vector3d::Zero());
      for (size_t k = 0; k < depths.size(); ++k) {
        sig[k] = csigma[size_t(cursor) + k];
        del[k] = (k + 1 < depths.size() ? depths[k + 1] : r.t_far) - depths[k];
      }
      cursor += int64_t(depths.size());
      auto comp = composite(col, sig, del, Eigen::Vector3d::Zero());
      Rng rng = base_rng.fork(stream_ids[size_t(ri)]).fork(0x9d2c);
      fine[size_t(ri)] = importance_samples(r.t_near, r.t_far, comp.weights, cfg.n_fine, rng);
    }
  }

  // Union pass: merge, compute deltas, warp, encode directions.
  plan.deltas.resize(size_t(plan.n_rays * s));
  plan.points.resize(size_t(plan.n_rays * s));
  plan.dir_enc = Tensor<T>({plan.n_rays * s, dec.encoded_dir_dim()});
  const int ed = dec.encoded_dir_dim();
  for (int64_t pr = 0; pr < plan.n_rays; ++pr) {
    const int ri = plan.ray_indices[size_t(pr)];
    const Ray& r = rays[size_t(ri)];
    std::vector<double> depths = coarse[size_t(ri)];
    depths.insert(depths.end(), fine[size_t(ri)].begin(), fine[size_t(ri)].end());
    std::sort(depths.begin(), depths.end());
    require(int64_t(depths.size()) == s, "plan_ray_batch: sample count drift");
    for (int64_t k = 0; k < s; ++k) {
      const double t = depths[size_t(k)];
      plan.deltas[size_t(pr * s + k)] = T((k + 1 < s ? depths[size_t(k + 1)] : r.t_far) - t);
      plan.points[size_t(pr * s + k)] = to_canonical(r.origin + t * r.dir);
      detail::encode_dir_row(r.dir, dec.l_dir, &plan.dir_enc.data[size_t((pr * s + k) * ed)]);
    }
  }
  return plan;
}

// --- differentiable render ----------------------------------------------------

template <typename T>
struct RenderedBatch {
  Var<T> rgb;   // [n_rays, 3]
  Var<T> mask;  // [n_rays]
};

template <typename T>
RenderedBatch<T> render_batch(Tape<T>& tape, const RayBatchPlan<T>& plan,
                              const std::array<Var<T>, 3>& plane_vars, const BBox& bbox,
                              bool shift, const MlpDecoder<T>& dec, const DecoderVars<T>& dv,
                              const RenderConfig& cfg) {
  const int64_t s = plan.samples_per_ray;
  require(plan.n_rays > 0, "render_batch: empty plan");
  Var<T> feats = sample_features_batch(plane_vars, bbox, shift, plan.points);
  Var<T> dir_enc = tape.constant(plan.dir_enc);
  auto dec_out = decode_batch(tape, dec, dv, feats, dir_enc);

  Var<T> deltas = tape.constant(Tensor<T>({plan.n_rays * s}, std::vector<T>(plan.deltas)));
  Var<T> q = exp(neg(mul(dec_out.sigma, deltas)));  // 1 - alpha
  Var<T> trans = cumprod_exclusive_groups(q, s);
  Var<T> alpha = offset(neg(q), T(1));
  Var<T> weights = mul(trans, alpha);
  Var<T> mask = sum_groups(weights, s);
  Var<T> fg = weighted_sum_groups(weights, dec_out.rgb, s);
  Tensor<T> bg({plan.n_rays, 3});
  for (int64_t i = 0; i < plan.n_rays; ++i)
    for (int a = 0; a < 3; ++a) bg.at(i, a) = T(cfg.background[a]);
  Var<T> leftover = offset(neg(mask), T(1));
  Var<T> bg_term = weighted_sum_groups(leftover, tape.constant(std::move(bg)), 1);
  return {add(fg, bg_term), mask};
}

// --- convenience entry points ---------------------------------------------------

// Render one ray: samples depths, warps points into canonical space, decodes
// and composites coarse+fine. Background rays return the background color
// with mask zero.
template <typename T>
std::pair<Eigen::Vector3d, double> render_pixel(const Ray& ray, const TriPlane<T>& tp,
                                                const MlpDecoder<T>& dec, const RenderConfig& cfg,
                                                const Pose* pose, const Skeleton* skel,
                                                const Rng& rng, uint64_t stream_id = 0) {
  if (!ray.hits_bounds) return {cfg.background, 0.0};
  RayBatchPlan<T> plan = plan_ray_batch<T>({ray}, tp, dec, cfg, pose, skel, rng, {stream_id});
  Tape<T> tape;
  std::array<Var<T>, 3> planes;
  for (int i = 0; i < 3; ++i) planes[size_t(i)] = tape.constant(tp.planes[size_t(i)]);
  DecoderVars<T> dv;
  for (auto& [name, p] : const_cast<MlpDecoder<T>&>(dec).params())
    dv.vars.emplace(name, tape.constant(*p));
  auto out = render_batch(tape, plan, planes, tp.bbox, tp.shift_enabled, dec, dv, cfg);
  Eigen::Vector3d rgb;
  for (int a = 0; a < 3; ++a) rgb[a] = double(out.rgb.value().at(0, a));
  return {rgb, double(out.mask.value()[0])};
}

// Full-frame render; alpha channel carries the accumulated opacity.
// Deterministic for a given seed regardless of chunking.
template <typename T>
ImageF render_image(const TriPlane<T>& tp, const MlpDecoder<T>& dec, const Camera& cam,
                    const RenderConfig& cfg, const Pose* pose, const Skeleton* skel,
                    uint64_t seed) {
  ImageF img(cam.width, cam.height, 4);
  const Rng rng(seed);
  const int chunk_rows = 8;
  const int n_chunks = (cam.height + chunk_rows - 1) / chunk_rows;
#pragma omp parallel for schedule(dynamic)
  for (int chunk = 0; chunk < n_chunks; ++chunk) {
    const int y0 = chunk * chunk_rows, y1 = std::min(cam.height, y0 + chunk_rows);
    std::vector<Ray> rays;
    std::vector<uint64_t> ids;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < cam.width; ++x) {
        rays.push_back(generate_ray(cam, x, y, tp.bbox));
        ids.push_back(uint64_t(y) * uint64_t(cam.width) + uint64_t(x));
      }
    RayBatchPlan<T> plan = plan_ray_batch(rays, tp, dec, cfg, pose, skel, rng, ids);
    // background rays
    for (size_t i = 0; i < rays.size(); ++i) {
      const int x = int(i) % cam.width, y = y0 + int(i) / cam.width;
      for (int a = 0; a < 3; ++a) img.at(x, y, a) = float(cfg.background[a]);
      img.at(x, y, 3) = 0.f;
    }
    if (plan.n_rays > 0) {
      Tape<T> tape;
      std::array<Var<T>, 3> planes;
      for (int j = 0; j < 3; ++j) planes[size_t(j)] = tape.constant(tp.planes[size_t(j)]);
      DecoderVars<T> dv;
      for (auto& [name, p] : const_cast<MlpDecoder<T>&>(dec).params())
        dv.vars.emplace(name, tape.constant(*p));
      auto out = render_batch(tape, plan, planes, tp.bbox, tp.shift_enabled, dec, dv, cfg);
      for (int64_t pr = 0; pr < plan.n_rays; ++pr) {
        const int64_t flat = int64_t(plan.ray_indices[size_t(pr)]);
        const int x = int(flat) % cam.width, y = y0 + int(flat) / cam.width;
        for (int a = 0; a < 3; ++a)
          img.at(x, y, a) = std::clamp(float(out.rgb.value().at(pr, a)), 0.f, 1.f);
        img.at(x, y, 3) = std::clamp(float(out.mask.value()[pr]), 0.f, 1.f);
      }
    }
  }
  return img;
}

}  // namespace lf
