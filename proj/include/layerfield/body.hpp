#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <string>
#include <vector>

#include "layerfield/common.hpp"

namespace lf {

// Capsule attached to a pair of joints; moves rigidly with joint a.
struct Capsule {
  int joint_a = 0;
  int joint_b = 0;
  double radius = 0.05;
};

// Simplified articulated body: a joint tree with rest positions plus bone
// capsules for blend-weight computation. Geometry is always double.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parents;                 // -1 for the root
  std::vector<Eigen::Vector3d> rest_joints; // J
  std::vector<Capsule> capsules;

  int joint_count() const { return int(rest_joints.size()); }

  void validate() const {
    require(!rest_joints.empty(), "skeleton: no joints");
    require(parents.size() == rest_joints.size(), "skeleton: parents/joints size mismatch");
    int roots = 0;
    for (size_t i = 0; i < parents.size(); ++i) {
      if (parents[i] < 0) {
        ++roots;
      } else {
        require(parents[i] < int(i), "skeleton: parents must precede children");
      }
    }
    require(roots == 1, "skeleton: exactly one root required");
    for (const auto& c : capsules) {
      require(c.joint_a >= 0 && c.joint_a < joint_count() && c.joint_b >= 0 &&
                  c.joint_b < joint_count(),
              "skeleton: capsule joint index out of range");
      require(c.radius > 0, "skeleton: capsule radii must be positive");
    }
  }
};

struct Pose {
  std::vector<Eigen::Vector3d> axis_angle;  // per joint
  Eigen::Vector3d root_translation = Eigen::Vector3d::Zero();

  static Pose identity(int joint_count) {
    Pose p;
    p.axis_angle.assign(size_t(joint_count), Eigen::Vector3d::Zero());
    return p;
  }
  bool is_identity() const {
    if (!root_translation.isZero(0.0)) return false;
    for (const auto& a : axis_angle)
      if (!a.isZero(0.0)) return false;
    return true;
  }
};

using BlendWeights = std::vector<double>;  // K nonnegative, sums to 1

namespace detail {

inline Eigen::Isometry3d rotation_about(const Eigen::Vector3d& axis_angle,
                                        const Eigen::Vector3d& center) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  const double angle = axis_angle.norm();
  Eigen::Matrix3d rot = angle < 1e-300
                            ? Eigen::Matrix3d::Identity()
                            : Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
  t.linear() = rot;
  t.translation() = center - rot * center;
  return t;
}

}  // namespace detail

// Forward kinematics: per-joint rigid transforms G_k mapping rest-pose world
// coordinates of points attached to joint k to their posed coordinates.
// Zero pose gives identities.
inline std::vector<Eigen::Isometry3d> joint_transforms(const Skeleton& skel, const Pose& pose) {
  const int k = skel.joint_count();
  require(int(pose.axis_angle.size()) == k, "joint_transforms: pose size mismatch");
  for (const auto& a : pose.axis_angle)
    require(a.allFinite(), "joint_transforms: non-finite pose");

  std::vector<Eigen::Isometry3d> world(static_cast<size_t>(k));  // posed frame of joint k
  std::vector<Eigen::Isometry3d> g(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    // local: rotate about the joint's rest position within the parent frame
    Eigen::Isometry3d local = detail::rotation_about(pose.axis_angle[size_t(j)],
                                                     skel.rest_joints[size_t(j)]);
    if (skel.parents[size_t(j)] < 0) {
      Eigen::Isometry3d shift = Eigen::Isometry3d::Identity();
      shift.translation() = pose.root_translation;
      world[size_t(j)] = shift * local;
    } else {
      world[size_t(j)] = world[size_t(skel.parents[size_t(j)])] * local;
    }
    g[size_t(j)] = world[size_t(j)];
  }
  return g;
}

inline double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                     const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-300) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline constexpr double kBlendEps = 1e-4;

// Blend weights from capsule distances: w_k proportional to 1/(d_k+eps)^2
// with d_k the distance to bone k's axis less the capsule radius, clamped at
// zero inside the capsule. Weights land on the joint each capsule is
// attached to and are normalized to the simplex.
inline BlendWeights blend_weights(const Skeleton& skel, const Eigen::Vector3d& p,
                                  const std::vector<Eigen::Isometry3d>* transforms = nullptr) {
  const int k = skel.joint_count();
  BlendWeights w(size_t(k), 0.0);
  double total = 0.0;
  for (const auto& cap : skel.capsules) {
    Eigen::Vector3d a = skel.rest_joints[size_t(cap.joint_a)];
    Eigen::Vector3d b = skel.rest_joints[size_t(cap.joint_b)];
    if (transforms) {
      a = (*transforms)[size_t(cap.joint_a)] * a;
      b = (*transforms)[size_t(cap.joint_a)] * b;
    }
    const double d = std::max(point_segment_distance(p, a, b) - cap.radius, 0.0);
    const double wt = 1.0 / ((d + kBlendEps) * (d + kBlendEps));
    w[size_t(cap.joint_a)] += wt;
    total += wt;
  }
  require(total > 0, "blend_weights: skeleton has no capsules");
  for (auto& v : w) v /= total;
  return w;
}

// p^o = sum_k w_k G_k p^c
inline Eigen::Vector3d lbs_forward(const Eigen::Vector3d& p_c, const BlendWeights& w,
                                   const std::vector<Eigen::Isometry3d>& transforms) {
  require(w.size() == transforms.size(), "lbs_forward: weight/transform count mismatch");
  Eigen::Matrix4d blended = Eigen::Matrix4d::Zero();
  for (size_t k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) blended += w[k] * transforms[k].matrix();
  return (blended * p_c.homogeneous()).head<3>();
}

// Inverse LBS: weights are computed in observation space against the posed
// capsules, then the blended transform is inverted.
inline Eigen::Vector3d lbs_inverse(const Eigen::Vector3d& p_o, const Pose& pose,
                                   const Skeleton& skel,
                                   const std::vector<Eigen::Isometry3d>& transforms) {
  const BlendWeights w = blend_weights(skel, p_o, &transforms);
  Eigen::Matrix4d blended = Eigen::Matrix4d::Zero();
  for (size_t k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) blended += w[k] * transforms[k].matrix();
  const double det = blended.block<3, 3>(0, 0).determinant();
  require_numeric(std::abs(det) >= 1e-9, "lbs_inverse: singular blended transform");
  return (blended.inverse() * p_o.homogeneous()).head<3>();
}

inline Eigen::Vector3d lbs_inverse(const Eigen::Vector3d& p_o, const Pose& pose,
                                   const Skeleton& skel) {
  return lbs_inverse(p_o, pose, skel, joint_transforms(skel, pose));
}

// The desk-scale default body: 8 joints, 7 capsules (torso, head, two arms,
// two legs), 1.5 units tall, centered in the canonical box.
Skeleton default_skeleton();

Skeleton load_skeleton(const std::string& path);
void save_skeleton(const std::string& path, const Skeleton& skel);

}  // namespace lf
