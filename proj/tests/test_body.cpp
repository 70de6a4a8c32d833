#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "layerfield/body.hpp"
#include "layerfield/rng.hpp"

using namespace lf;

TEST_CASE("joint_transforms: zero pose gives identities") {
  Skeleton s = default_skeleton();
  auto g = joint_transforms(s, Pose::identity(s.joint_count()));
  for (const auto& t : g) CHECK(t.matrix().isApprox(Eigen::Matrix4d::Identity(), 1e-14));
}

TEST_CASE("joint_transforms: root-only rotation rotates every joint about the root") {
  Skeleton s = default_skeleton();
  Pose pose = Pose::identity(s.joint_count());
  pose.axis_angle[0] = Eigen::Vector3d(0, 0, M_PI / 3);
  auto g = joint_transforms(s, pose);
  const Eigen::Matrix3d r = Eigen::AngleAxisd(M_PI / 3, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Vector3d root = s.rest_joints[0];
  for (int j = 0; j < s.joint_count(); ++j) {
    CHECK(g[j].linear().isApprox(r, 1e-12));
    Eigen::Vector3d probe(0.3, 0.4, 0.1);
    Eigen::Vector3d expect = root + r * (probe - root);
    CHECK((g[j] * probe - expect).norm() < 1e-12);
  }
}

TEST_CASE("joint_transforms: 2-joint chain, child rotated 90 degrees about z") {
  Skeleton s;
  s.names = {"a", "b"};
  s.parents = {-1, 0};
  s.rest_joints = {{0, 0, 0}, {1, 0, 0}};
  s.capsules = {{0, 1, 0.1}};
  Pose pose = Pose::identity(2);
  pose.axis_angle[1] = Eigen::Vector3d(0, 0, M_PI / 2);
  auto g = joint_transforms(s, pose);
  // A point one unit past joint b along x swings to b + (0,1,0).
  Eigen::Vector3d tip(2, 0, 0);
  Eigen::Vector3d posed = g[1] * tip;
  CHECK((posed - Eigen::Vector3d(1, 1, 0)).norm() < 1e-12);
  // Joint b itself stays put (rotation about its own center).
  CHECK((g[1] * s.rest_joints[1] - s.rest_joints[1]).norm() < 1e-12);
}

TEST_CASE("blend_weights: dominance, symmetry, simplex") {
  SUBCASE("point on one bone axis far from others dominates") {
    Skeleton s = default_skeleton();
    // middle of the torso capsule segment, inside the capsule
    Eigen::Vector3d p = 0.5 * (s.rest_joints[0] + s.rest_joints[1]);
    auto w = blend_weights(s, p);
    CHECK(w[0] > 0.99);
  }
  SUBCASE("point equidistant from two identical bones splits evenly") {
    Skeleton s;
    s.names = {"root", "l", "r"};
    s.parents = {-1, 0, 0};
    s.rest_joints = {{0, 0, 0}, {-1, -1, 0}, {1, -1, 0}};
    s.capsules = {{1, 1, 0.1}, {2, 2, 0.1}};  // two point-capsules
    Eigen::Vector3d p(0, -1, 0);
    auto w = blend_weights(s, p);
    CHECK(w[1] == doctest::Approx(0.5));
    CHECK(w[2] == doctest::Approx(0.5));
  }
  SUBCASE("weights lie on the simplex for random points") {
    Skeleton s = default_skeleton();
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      Eigen::Vector3d p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      auto w = blend_weights(s, p);
      double sum = 0;
      for (double v : w) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("lbs_forward closed forms") {
  SUBCASE("identity transforms act as identity") {
    Skeleton s = default_skeleton();
    auto g = joint_transforms(s, Pose::identity(s.joint_count()));
    Eigen::Vector3d p(0.1, 0.2, 0.3);
    auto w = blend_weights(s, p);
    CHECK((lbs_forward(p, w, g) - p).norm() < 1e-12);
  }
  SUBCASE("single nonzero weight applies that transform exactly") {
    std::vector<Eigen::Isometry3d> g(2, Eigen::Isometry3d::Identity());
    g[1].translation() = Eigen::Vector3d(1, 2, 3);
    g[1].linear() = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitY()).toRotationMatrix();
    BlendWeights w = {0.0, 1.0};
    Eigen::Vector3d p(0.4, -0.1, 0.2);
    CHECK((lbs_forward(p, w, g) - g[1] * p).norm() < 1e-14);
  }
  SUBCASE("two pure translations blend linearly") {
    std::vector<Eigen::Isometry3d> g(2, Eigen::Isometry3d::Identity());
    g[0].translation() = Eigen::Vector3d(1, 0, 0);
    g[1].translation() = Eigen::Vector3d(0, 2, 0);
    BlendWeights w = {0.3, 0.7};
    Eigen::Vector3d p(0.5, 0.5, 0.5);
    Eigen::Vector3d expect = p + 0.3 * Eigen::Vector3d(1, 0, 0) + 0.7 * Eigen::Vector3d(0, 2, 0);
    CHECK((lbs_forward(p, w, g) - expect).norm() < 1e-14);
  }
}

TEST_CASE("lbs_inverse: identity, rigid rotation, round trip") {
  Skeleton s = default_skeleton();
  SUBCASE("identity pose is the identity map") {
    Pose pose = Pose::identity(s.joint_count());
    Eigen::Vector3d p(0.12, 0.3, -0.05);
    CHECK((lbs_inverse(p, pose, s) - p).norm() < 1e-12);
  }
  SUBCASE("whole-body rigid rotation inverts exactly") {
    Pose pose = Pose::identity(s.joint_count());
    pose.axis_angle[0] = Eigen::Vector3d(0.3, 0.5, -0.2);
    auto g = joint_transforms(s, pose);
    Eigen::Vector3d pc(0.05, 0.2, 0.1);
    Eigen::Vector3d po = g[0] * pc;  // every G_k equals the root motion
    CHECK((lbs_inverse(po, pose, s) - pc).norm() < 1e-10);
  }
  SUBCASE("forward(inverse(p)) round trip in rigid regions") {
    Pose pose = Pose::identity(s.joint_count());
    pose.axis_angle[3] = Eigen::Vector3d(0, 0, 0.6);  // bend the left arm
    pose.axis_angle[0] = Eigen::Vector3d(0, 0.2, 0);
    auto g = joint_transforms(s, pose);
    Rng rng(9);
    int tested = 0;
    for (int i = 0; i < 500 && tested < 50; ++i) {
      Eigen::Vector3d po(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.4, 0.4));
      auto w = blend_weights(s, po, &g);
      double wmax = 0;
      for (double v : w) wmax = std::max(wmax, v);
      if (wmax < 0.99) continue;
      ++tested;
      Eigen::Vector3d pc = lbs_inverse(po, pose, s, g);
      // forward with canonical-side weights of the recovered point
      auto wf = blend_weights(s, po, &g);
      Eigen::Vector3d back = lbs_forward(pc, wf, g);
      CHECK((back - po).norm() < 1e-6);
    }
    CHECK(tested > 10);
  }
}

TEST_CASE("skeleton file round trip") {
  Skeleton s = default_skeleton();
  const auto path = std::filesystem::temp_directory_path() / "lf_skel_test.txt";
  save_skeleton(path.string(), s);
  Skeleton back = load_skeleton(path.string());
  REQUIRE(back.joint_count() == s.joint_count());
  for (int j = 0; j < s.joint_count(); ++j) {
    CHECK(back.names[j] == s.names[j]);
    CHECK(back.parents[j] == s.parents[j]);
    CHECK((back.rest_joints[j] - s.rest_joints[j]).norm() < 1e-12);
  }
  REQUIRE(back.capsules.size() == s.capsules.size());
  for (size_t i = 0; i < s.capsules.size(); ++i)
    CHECK(back.capsules[i].radius == doctest::Approx(s.capsules[i].radius));
  std::filesystem::remove(path);
}
