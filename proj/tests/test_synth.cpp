#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "layerfield/synth.hpp"

using namespace lf;
namespace fs = std::filesystem;

TEST_CASE("make_subject is deterministic and layer-monotone") {
  SyntheticSubject a = make_subject(42), b = make_subject(42), c = make_subject(43);
  CHECK(a.skin_color == b.skin_color);
  for (int s = 0; s < 3; ++s) CHECK(a.shells[s].color == b.shells[s].color);
  CHECK(a.skin_color != c.skin_color);

  SUBCASE("density monotone over layers at random probes") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
      Eigen::Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      double prev = a.density_at(p, 0);
      for (int l = 1; l < 4; ++l) {
        const double cur = a.density_at(p, l);
        CHECK(cur >= prev);
        prev = cur;
      }
    }
  }
}

TEST_CASE("probe inside the torso shell sees the shirt color at layer 2") {
  SyntheticSubject s = make_subject(5);
  // point just outside the torso capsule surface, mid-torso
  const Capsule& torso = s.skeleton.capsules[0];
  const Eigen::Vector3d a = s.skeleton.rest_joints[torso.joint_a];
  const Eigen::Vector3d b = s.skeleton.rest_joints[torso.joint_b];
  const Eigen::Vector3d mid = 0.5 * (a + b);
  const Eigen::Vector3d p = mid + Eigen::Vector3d(torso.radius + 0.5 * s.shells[1].thickness, 0, 0);
  CHECK(s.density_at(p, 2) > 0.0);
  CHECK(s.color_at(p, 2) == s.shells[1].color);
  // at layer 1 (pants only) the same point carries no shell there
  CHECK(s.color_at(p, 1) == s.skin_color);
}

TEST_CASE("render_reference: empty subject gives background and zero mask") {
  SyntheticSubject s = make_subject(1);
  s.skeleton.capsules.clear();
  s.shells = {};
  Camera cam = Camera::look_at({0, 0, -2.7}, {0, 0, 0}, 16, 16, 0.62);
  ImageF img = render_reference(s, cam, 0, BBox{}, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(img.at(x, y, 0) == 1.f);
      CHECK(img.at(x, y, 3) == 0.f);
    }
}

TEST_CASE("layer masks are nested up to sampling noise") {
  SyntheticSubject s = make_subject(9);
  const BBox bbox;
  Camera cam = Camera::look_at(s.centroid() + Eigen::Vector3d(0.3, 0.1, -2.7), s.centroid(), 32,
                               32, 0.62);
  ImageF prev = render_reference(s, cam, 0, bbox, 128);
  for (int l = 1; l < 4; ++l) {
    ImageF cur = render_reference(s, cam, l, bbox, 128);
    int violations = 0, total = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const bool was = prev.at(x, y, 3) > 0.5f, now = cur.at(x, y, 3) > 0.5f;
        total += was ? 1 : 0;
        if (was && !now) ++violations;
      }
    CHECK(double(violations) <= 0.01 * double(std::max(total, 1)));
    prev = cur;
  }
}

TEST_CASE("build_dataset: counts, manifest round trip, camera aim") {
  const fs::path dir = fs::temp_directory_path() / "lf_synth_ds";
  fs::remove_all(dir);
  DatasetManifest m = build_dataset(1, 2, dir.string(), 16, 77, 48);

  SUBCASE("one subject, two views -> 8 images plus metadata") {
    int pngs = 0;
    for (auto& e : fs::recursive_directory_iterator(dir))
      if (e.path().extension() == ".png") ++pngs;
    CHECK(pngs == 8);
    CHECK(fs::exists(dir / "cameras.txt"));
    CHECK(fs::exists(dir / "pose.txt"));
    CHECK(fs::exists(dir / "skeleton.txt"));
    CHECK(fs::exists(dir / "manifest.txt"));
    m.validate_files();
  }
  SUBCASE("manifest round trip") {
    DatasetManifest back = DatasetManifest::load((dir / "manifest.txt").string());
    CHECK(back == m);
  }
  SUBCASE("cameras aim at the subject centroid") {
    auto cams = load_cameras((dir / "cameras.txt").string());
    const Eigen::Vector3d target = make_subject(77).centroid();
    for (const auto& cam : cams) {
      const Eigen::Vector3d o = cam.world_from_cam.translation();
      const Eigen::Vector3d d = cam.world_from_cam.linear().col(2);  // principal ray
      const double dist = ((target - o) - (target - o).dot(d) * d).norm();
      CHECK(dist < 0.05);
    }
  }
  SUBCASE("dataset images are binary-masked RGBA") {
    ImageF img = read_png(m.image_path(0, 3, 0));
    CHECK(img.channels == 4);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const float a = img.at(x, y, 3);
        CHECK((a == 0.f || a == 1.f));
      }
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset generation is a pure function of its inputs") {
  const fs::path d1 = fs::temp_directory_path() / "lf_synth_d1";
  const fs::path d2 = fs::temp_directory_path() / "lf_synth_d2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  build_dataset(1, 1, d1.string(), 12, 123, 32);
  build_dataset(1, 1, d2.string(), 12, 123, 32);
  ImageF a = read_png((d1 / "subject_0000/layer_2/view_0000.png").string());
  ImageF b = read_png((d2 / "subject_0000/layer_2/view_0000.png").string());
  REQUIRE(a.data.size() == b.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
  fs::remove_all(d1);
  fs::remove_all(d2);
}
