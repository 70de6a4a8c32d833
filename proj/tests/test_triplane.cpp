#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "layerfield/rng.hpp"
#include "layerfield/triplane.hpp"

using namespace lf;

namespace {

// Independent bilinear oracle: straight re-implementation with clamping,
// kept deliberately separate from the library path.
double oracle_bilinear(const Tensor<double>& plane, double u, double v, double du, double dv,
                       int64_t ch) {
  const int64_t h = plane.shape[0], w = plane.shape[1];
  double x = std::clamp(u * double(w - 1) + du, 0.0, double(w - 1));
  double y = std::clamp(v * double(h - 1) + dv, 0.0, double(h - 1));
  int64_t x0 = std::min<int64_t>(int64_t(std::floor(x)), w - 2);
  int64_t y0 = std::min<int64_t>(int64_t(std::floor(y)), h - 2);
  x0 = std::max<int64_t>(x0, 0);
  y0 = std::max<int64_t>(y0, 0);
  const double fx = x - double(x0), fy = y - double(y0);
  auto val = [&](int64_t yy, int64_t xx) {
    return plane.at(std::min(yy, h - 1), std::min(xx, w - 1), ch);
  };
  return (1 - fx) * (1 - fy) * val(y0, x0) + fx * (1 - fy) * val(y0, x0 + 1) +
         (1 - fx) * fy * val(y0 + 1, x0) + fx * fy * val(y0 + 1, x0 + 1);
}

}  // namespace

TEST_CASE("project: center, corner, asymmetric bbox") {
  BBox unit{{-1, -1, -1}, {1, 1, 1}};
  for (auto plane : {PlaneId::UV, PlaneId::UW, PlaneId::WV}) {
    auto [u, v] = project_point(unit, {0, 0, 0}, plane);
    CHECK(u == doctest::Approx(0.5));
    CHECK(v == doctest::Approx(0.5));
  }
  auto [u2, v2] = project_point(unit, {1, -1, 0}, PlaneId::UV);
  CHECK(u2 == doctest::Approx(1.0));
  CHECK(v2 == doctest::Approx(0.0));

  BBox box2{{0, 0, 0}, {2, 2, 2}};
  auto [u3, v3] = project_point(box2, {0.5, 1.0, 1.5}, PlaneId::UV);
  CHECK(u3 == doctest::Approx(0.25));
  CHECK(v3 == doctest::Approx(0.5));
}

TEST_CASE("sample_plane basics") {
  SUBCASE("grid node returns stored value") {
    Rng rng(2);
    Tensor<double> plane = random_normal<double>({3, 4, 2}, rng);
    for (int64_t y = 0; y < 3; ++y)
      for (int64_t x = 0; x < 4; ++x) {
        auto s = sample_plane(plane, double(x) / 3.0, double(y) / 2.0);
        CHECK(s[0] == doctest::Approx(plane.at(y, x, 0)));
        CHECK(s[1] == doctest::Approx(plane.at(y, x, 1)));
      }
  }
  SUBCASE("constant plane interpolates to the constant for any uv/offset") {
    Tensor<double> plane = Tensor<double>::full({5, 5, 1}, 3.25);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      auto s = sample_plane(plane, rng.uniform(), rng.uniform(), rng.uniform(-1, 1),
                            rng.uniform(-1, 1));
      CHECK(s[0] == doctest::Approx(3.25));
    }
  }
  SUBCASE("2x2 hand case") {
    Tensor<double> plane({2, 2, 1}, {0, 1, 2, 3});
    CHECK(sample_plane(plane, 0.5, 0.5)[0] == doctest::Approx(1.5));
  }
}

TEST_CASE("sample_features: zeros, shift constants, brute-force oracle") {
  SUBCASE("zero planes give the zero 3C vector") {
    TriPlane<double> tp(4, 4, 9, true);
    auto f = sample_features(tp, {0.3, -0.2, 0.7});
    CHECK(f.size() == 27);
    for (double v : f) CHECK(v == 0.0);
  }
  SUBCASE("out-of-bbox gives the zero vector") {
    TriPlane<double> tp(4, 4, 9, false);
    Rng rng(5);
    for (auto& p : tp.planes) p = random_normal<double>({4, 4, 9}, rng);
    auto f = sample_features(tp, {1.5, 0.0, 0.0});
    for (double v : f) CHECK(v == 0.0);
  }
  SUBCASE("constant fields are shift-invariant") {
    TriPlane<double> shifted(6, 6, 9, true);
    TriPlane<double> plain(6, 6, 9, false);
    for (int pl = 0; pl < 3; ++pl) {
      shifted.planes[pl] = Tensor<double>::full({6, 6, 9}, 0.5 + pl);
      plain.planes[pl] = shifted.planes[pl];
    }
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
      Eigen::Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      auto a = sample_features(shifted, p);
      auto b = sample_features(plain, p);
      for (size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]));
    }
  }
  SUBCASE("random 4x4x9 tri-plane matches manual per-sub-plane evaluation") {
    Rng rng(11);
    for (bool shift : {false, true}) {
      TriPlane<double> tp(4, 4, 9, shift);
      for (auto& p : tp.planes) p = random_normal<double>({4, 4, 9}, rng);
      const Eigen::Vector3d pt(0.37, -0.41, 0.73);
      auto f = sample_features(tp, pt);
      for (int pl = 0; pl < 3; ++pl) {
        auto [u, v] = project_point(tp.bbox, pt, PlaneId(pl));
        for (int64_t ch = 0; ch < 9; ++ch) {
          double du = 0, dv = 0;
          if (shift) {
            const int sub = int(ch / 3);
            du = (sub == 1) ? 0.5 : 0.0;
            dv = (sub == 2) ? 0.5 : 0.0;
          }
          const double expect = oracle_bilinear(tp.planes[pl], u, v, du, dv, ch);
          CHECK(f[size_t(pl * 9 + ch)] == doctest::Approx(expect).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("shift adds resolution within one texel cell") {
  // Two points straddling a half-texel boundary inside the same cell.
  TriPlane<double> tp(4, 4, 3, true);
  Rng rng(13);
  for (auto& p : tp.planes) p = random_normal<double>({4, 4, 3}, rng);
  // u positions chosen so x = u*(W-1) lands at 0.7 and 1.3: both inside the
  // nearest-node cell of node 1 ([0.5,1.5)), straddling its half-texel
  // midpoint, so the +0.5-shifted sub-plane resolves them to different nodes.
  const double x1 = 0.7 / 3.0, x2 = 1.3 / 3.0;
  const double y = 1.25 / 3.0;
  const Eigen::Vector3d pa(x1 * 2 - 1, y * 2 - 1, 0.1), pb(x2 * 2 - 1, y * 2 - 1, 0.1);
  auto fa = sample_features(tp, pa);
  auto fb = sample_features(tp, pb);
  double diff = 0;
  for (size_t k = 0; k < fa.size(); ++k) diff += std::abs(fa[k] - fb[k]);
  CHECK(diff > 1e-6);
  // Nearest-node reading of the unshifted sub-plane agrees for the two
  // points; the shifted sub-plane resolves them apart.
  CHECK(std::lround(0.7) == std::lround(1.3));
  CHECK(std::lround(0.7 + 0.5) != std::lround(1.3 + 0.5));
}

TEST_CASE("shift does not change the stored parameter count") {
  TriPlane<double> a(8, 8, 9, false), b(8, 8, 9, true);
  CHECK(a.param_count() == b.param_count());
}

TEST_CASE("tv_loss closed forms and homogeneity") {
  SUBCASE("constant planes give zero") {
    TriPlane<double> tp(5, 5, 3, false);
    for (auto& p : tp.planes) p = Tensor<double>::full({5, 5, 3}, 1.7);
    CHECK(tv_loss_value(tp) == doctest::Approx(0.0));
  }
  SUBCASE("1x2x1 plane [0,1] contributes |1-0|/2") {
    TriPlane<double> tp(1, 2, 1, false);
    tp.planes[0] = Tensor<double>({1, 2, 1}, {0.0, 1.0});
    CHECK(tv_loss_value(tp) == doctest::Approx(0.5));
  }
  SUBCASE("doubling values doubles tv") {
    Rng rng(17);
    TriPlane<double> tp(4, 6, 2, false);
    for (auto& p : tp.planes) p = random_normal<double>({4, 6, 2}, rng);
    const double base = tv_loss_value(tp);
    for (auto& p : tp.planes)
      for (auto& v : p.data) v *= 2.0;
    CHECK(tv_loss_value(tp) == doctest::Approx(2.0 * base));
  }
}

TEST_CASE("sparsity_loss closed forms and brute force") {
  TriPlane<double> tp(3, 3, 2, false);
  CHECK(sparsity_loss_value(tp) == doctest::Approx(0.0));
  for (auto& p : tp.planes) p = Tensor<double>::full({3, 3, 2}, -0.4);
  CHECK(sparsity_loss_value(tp) == doctest::Approx(3 * 0.4));

  Rng rng(19);
  for (auto& p : tp.planes) p = random_normal<double>({3, 3, 2}, rng);
  double brute = 0;
  for (const auto& p : tp.planes) {
    double s = 0;
    for (double v : p.data) s += std::abs(v);
    brute += s / double(p.numel());
  }
  CHECK(sparsity_loss_value(tp) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("tv and sparsity gradients match the finite-difference oracle") {
  Rng rng(23);
  ParamMap<double> params;
  // Values staggered away from zero so |.| kinks stay clear of the probe.
  for (int pl = 0; pl < 3; ++pl) {
    Tensor<double> t({4, 4, 3});
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double mag = 0.05 + 0.4 * rng.uniform();
      t[i] = (rng.uniform() < 0.5 ? -1 : 1) * mag;
    }
    params.emplace("p" + std::to_string(pl), t);
  }
  auto rep = lf::testing::gradcheck(
      [](Tape<double>& t, const auto& p) {
        std::array<Var<double>, 3> vars{p.at("p0"), p.at("p1"), p.at("p2")};
        return add(tv_loss(vars), scale(sparsity_loss(vars), 0.3));
      },
      params);
  CHECK(rep.pass);
}

TEST_CASE("sampling is continuous across texel boundaries") {
  Rng rng(29);
  TriPlane<double> tp(6, 6, 3, true);
  for (auto& p : tp.planes) p = random_normal<double>({6, 6, 3}, rng);
  // step over a node boundary in tiny increments; consecutive samples differ
  // by at most the local Lipschitz bound (value range * step in texels)
  double vmax = 0;
  for (const auto& p : tp.planes)
    for (double v : p.data) vmax = std::max(vmax, std::abs(v));
  const double step = 1e-4;
  Eigen::Vector3d base(-0.2, 0.31, 0.44);
  auto prev = sample_features(tp, base);
  for (int i = 1; i <= 30; ++i) {
    Eigen::Vector3d q = base + Eigen::Vector3d(step * i, 0, 0);
    auto cur = sample_features(tp, q);
    for (size_t k = 0; k < cur.size(); ++k)
      CHECK(std::abs(cur[k] - prev[k]) < 4 * vmax * step * 6);
    prev = cur;
  }
}

TEST_CASE("triplane tensor stack round trip is lossless") {
  Rng rng(31);
  TriPlane<float> tp(5, 4, 9, true);
  for (auto& p : tp.planes) p = random_normal<float>({5, 4, 9}, rng);
  auto t = triplane_to_tensor(tp);
  CHECK(t.shape == Shape{5, 4, 27});
  auto back = triplane_from_tensor(t, tp.shift_enabled, tp.bbox);
  for (int pl = 0; pl < 3; ++pl)
    for (int64_t i = 0; i < tp.planes[pl].numel(); ++i)
      CHECK(back.planes[pl][i] == tp.planes[pl][i]);
}

TEST_CASE("batched differentiable sampling matches the plain path") {
  Rng rng(37);
  for (bool shift : {false, true}) {
    TriPlane<double> tp(5, 5, 9, shift);
    for (auto& p : tp.planes) p = random_normal<double>({5, 5, 9}, rng);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 16; ++i)
      pts.emplace_back(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
    Tape<double> tape;
    std::array<Var<double>, 3> vars;
    for (int i = 0; i < 3; ++i) vars[i] = tape.constant(tp.planes[i]);
    auto feats = sample_features_batch(vars, tp.bbox, shift, pts);
    for (size_t i = 0; i < pts.size(); ++i) {
      auto f = sample_features(tp, pts[i]);
      for (int64_t ch = 0; ch < 27; ++ch)
        CHECK(feats.value().at(int64_t(i), ch) == doctest::Approx(f[size_t(ch)]).epsilon(1e-12));
    }
  }
}
