#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <string>
#include <vector>

#include "layerfield/common.hpp"
#include "layerfield/triplane.hpp"

namespace lf {

// Pinhole camera, OpenCV axes: x right, y down, z forward.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Eigen::Isometry3d world_from_cam = Eigen::Isometry3d::Identity();

  void validate() const {
    require(width > 0 && height > 0, "camera: bad image size");
    require(fx > 0 && fy > 0, "camera: focal lengths must be positive");
    const Eigen::Matrix3d r = world_from_cam.linear();
    require((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-6,
            "camera: rotation not orthonormal");
  }

  // Camera placed at `position` looking at `target`, world up (0,1,0),
  // vertical field of view in radians.
  static Camera look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                        int width, int height, double vfov) {
    Camera c;
    c.width = width;
    c.height = height;
    c.fy = 0.5 * double(height) / std::tan(0.5 * vfov);
    c.fx = c.fy;
    c.cx = 0.5 * double(width);
    c.cy = 0.5 * double(height);
    const Eigen::Vector3d fwd = (target - position).normalized();
    Eigen::Vector3d up(0, 1, 0);
    if (std::abs(fwd.dot(up)) > 0.999) up = Eigen::Vector3d(0, 0, 1);
    const Eigen::Vector3d right = fwd.cross(up).normalized();
    const Eigen::Vector3d down = fwd.cross(right).normalized();
    Eigen::Matrix3d r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = fwd;
    c.world_from_cam.linear() = r;
    c.world_from_cam.translation() = position;
    return c;
  }
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();  // unit length
  double t_near = 0;
  double t_far = 0;
  bool hits_bounds = false;  // false marks a background ray
};

// Slab test against an axis-aligned box; entry clamped to stay in front of
// the camera.
inline bool intersect_bbox(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                           const BBox& box, double& t0, double& t1) {
  t0 = 1e-6;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-12) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return false;
      continue;
    }
    double ta = (box.min[a] - origin[a]) / dir[a];
    double tb = (box.max[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

// Unproject through the center of pixel (px, py). Near/far bounds come from
// the canonical bbox; rays that miss it are flagged as background rays.
inline Ray generate_ray(const Camera& cam, int px, int py, const BBox& box) {
  require(px >= 0 && px < cam.width && py >= 0 && py < cam.height, "generate_ray: pixel outside image");
  Ray r;
  const double x = (double(px) + 0.5 - cam.cx) / cam.fx;
  const double y = (double(py) + 0.5 - cam.cy) / cam.fy;
  r.origin = cam.world_from_cam.translation();
  r.dir = (cam.world_from_cam.linear() * Eigen::Vector3d(x, y, 1.0)).normalized();
  r.hits_bounds = intersect_bbox(r.origin, r.dir, box, r.t_near, r.t_far);
  return r;
}

std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::string& path, const std::vector<Camera>& cams);

}  // namespace lf
