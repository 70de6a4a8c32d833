#pragma once

#include <array>
#include <string>
#include <vector>

#include "layerfield/body.hpp"
#include "layerfield/camera.hpp"
#include "layerfield/image.hpp"
#include "layerfield/rng.hpp"

namespace lf {

// A garment shell: a density band just outside a set of capsule surfaces,
// restricted to an axial sub-range of each capsule.
struct GarmentShell {
  struct Piece {
    int capsule = 0;
    double s0 = 0, s1 = 1;  // axial range along the capsule segment
  };
  std::vector<Piece> pieces;
  double thickness = 0.035;
  Eigen::Vector3d color = Eigen::Vector3d(0.5, 0.5, 0.5);
};

// Procedural layered subject: capsule body (layer 0) plus three garment
// shells (pants, shirt, shoes). Layer i includes every shell j <= i, so the
// density field grows monotonically with the layer index.
struct SyntheticSubject {
  uint64_t seed = 0;
  Skeleton skeleton;
  Pose pose;                        // shared canonical pose (identity)
  Eigen::Vector3d skin_color = Eigen::Vector3d(0.8, 0.65, 0.55);
  std::array<GarmentShell, 3> shells;  // layers 1..3
  double sigma_max = 60.0;
  double falloff = 0.02;  // density edge width

  // Analytic fields. layer in [0,3].
  double density_at(const Eigen::Vector3d& p, int layer) const;
  Eigen::Vector3d color_at(const Eigen::Vector3d& p, int layer) const;
  Eigen::Vector3d centroid() const;
};

SyntheticSubject make_subject(uint64_t seed);

// Ray-march the analytic fields with the renderer's compositing rule.
// Alpha carries the accumulated opacity (continuous).
ImageF render_reference(const SyntheticSubject& subject, const Camera& cam, int layer,
                        const BBox& bbox, int n_samples = 160,
                        const Eigen::Vector3d& background = Eigen::Vector3d(1, 1, 1));

// On-disk dataset description. Paths are relative to root.
struct DatasetManifest {
  std::string root;
  int n_subjects = 0;
  int n_views = 0;
  int n_layers = 4;
  int width = 64, height = 64;
  uint64_t seed = 0;
  std::string cameras_file = "cameras.txt";
  std::string pose_file = "pose.txt";
  std::string skeleton_file = "skeleton.txt";

  std::string image_path(int subject, int layer, int view) const;
  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
  void validate_files() const;  // every referenced file exists

  bool operator==(const DatasetManifest& o) const {
    return n_subjects == o.n_subjects && n_views == o.n_views && n_layers == o.n_layers &&
           width == o.width && height == o.height && seed == o.seed &&
           cameras_file == o.cameras_file && pose_file == o.pose_file &&
           skeleton_file == o.skeleton_file;
  }
};

void save_pose(const std::string& path, const Pose& pose);
Pose load_pose(const std::string& path);

// Spherical ring of cameras looking at the subject centroid: uniform
// azimuth plus deterministic elevation jitter.
std::vector<Camera> spherical_cameras(int n_views, const Eigen::Vector3d& target, int width,
                                      int height, uint64_t seed, double radius = 2.7);

// Generates subjects, renders every (subject, layer, view) image with the
// mask binarized into the alpha channel, and writes cameras, pose, skeleton
// and the manifest under out_dir.
DatasetManifest build_dataset(int n_subjects, int n_views, const std::string& out_dir,
                              int image_size, uint64_t seed, int ref_samples = 160);

}  // namespace lf
