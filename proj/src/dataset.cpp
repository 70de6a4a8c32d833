#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "layerfield/renderer.hpp"
#include "layerfield/synth.hpp"

namespace lf {

namespace fs = std::filesystem;

namespace {

double smoothstep01(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Distance to the capsule axis and the closest axial parameter in [0,1].
std::pair<double, double> axis_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                        const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 < 1e-300 ? 0.0 : std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return {(p - (a + t * ab)).norm(), t};
}

}  // namespace

double SyntheticSubject::density_at(const Eigen::Vector3d& p, int layer) const {
  require(layer >= 0 && layer < 4, "density_at: layer in [0,3]");
  double best = 0.0;
  // body capsules
  for (const auto& cap : skeleton.capsules) {
    auto [dist, t] = axis_distance(p, skeleton.rest_joints[size_t(cap.joint_a)],
                                   skeleton.rest_joints[size_t(cap.joint_b)]);
    best = std::max(best, smoothstep01((cap.radius - dist) / falloff));
    if (best >= 1.0) return sigma_max;
  }
  // garment shells up to the requested layer (cumulative composition)
  for (int s = 0; s < layer; ++s) {
    const GarmentShell& shell = shells[size_t(s)];
    for (const auto& piece : shell.pieces) {
      const Capsule& cap = skeleton.capsules[size_t(piece.capsule)];
      auto [dist, t] = axis_distance(p, skeleton.rest_joints[size_t(cap.joint_a)],
                                     skeleton.rest_joints[size_t(cap.joint_b)]);
      if (t < piece.s0 || t > piece.s1) continue;
      const double inner = cap.radius - 1.5 * falloff;
      const double outer = cap.radius + shell.thickness;
      const double band = smoothstep01((outer - dist) / falloff) *
                          smoothstep01((dist - inner + falloff) / falloff);
      best = std::max(best, band);
      if (best >= 1.0) return sigma_max;
    }
  }
  return sigma_max * best;
}

Eigen::Vector3d SyntheticSubject::color_at(const Eigen::Vector3d& p, int layer) const {
  require(layer >= 0 && layer < 4, "color_at: layer in [0,3]");
  // outermost covering shell wins; otherwise skin
  for (int s = layer - 1; s >= 0; --s) {
    const GarmentShell& shell = shells[size_t(s)];
    for (const auto& piece : shell.pieces) {
      const Capsule& cap = skeleton.capsules[size_t(piece.capsule)];
      auto [dist, t] = axis_distance(p, skeleton.rest_joints[size_t(cap.joint_a)],
                                     skeleton.rest_joints[size_t(cap.joint_b)]);
      if (t < piece.s0 || t > piece.s1) continue;
      if (dist >= cap.radius - 2.0 * falloff && dist <= cap.radius + shell.thickness)
        return shell.color;
    }
  }
  return skin_color;
}

Eigen::Vector3d SyntheticSubject::centroid() const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& cap : skeleton.capsules)
    c += 0.5 * (skeleton.rest_joints[size_t(cap.joint_a)] +
                skeleton.rest_joints[size_t(cap.joint_b)]);
  return c / double(skeleton.capsules.size());
}

namespace {

const std::array<Eigen::Vector3d, 6> kSkinPalette = {
    Eigen::Vector3d(0.93, 0.80, 0.69), Eigen::Vector3d(0.78, 0.60, 0.47),
    Eigen::Vector3d(0.58, 0.41, 0.30), Eigen::Vector3d(0.38, 0.26, 0.19),
    Eigen::Vector3d(0.88, 0.68, 0.55), Eigen::Vector3d(0.67, 0.49, 0.37)};

const std::array<Eigen::Vector3d, 10> kGarmentPalette = {
    Eigen::Vector3d(0.82, 0.14, 0.14), Eigen::Vector3d(0.14, 0.24, 0.82),
    Eigen::Vector3d(0.10, 0.64, 0.22), Eigen::Vector3d(0.90, 0.84, 0.12),
    Eigen::Vector3d(0.56, 0.14, 0.72), Eigen::Vector3d(0.10, 0.70, 0.74),
    Eigen::Vector3d(0.95, 0.55, 0.10), Eigen::Vector3d(0.13, 0.13, 0.16),
    Eigen::Vector3d(0.90, 0.90, 0.94), Eigen::Vector3d(0.94, 0.50, 0.74)};

Eigen::Vector3d jitter_color(const Eigen::Vector3d& base, Rng& rng, double amount = 0.07) {
  Eigen::Vector3d c;
  for (int a = 0; a < 3; ++a)
    c[a] = std::clamp(base[a] + rng.uniform(-amount, amount), 0.03, 0.97);
  return c;
}

}  // namespace

SyntheticSubject make_subject(uint64_t seed) {
  SyntheticSubject s;
  s.seed = seed;
  s.skeleton = default_skeleton();
  s.pose = Pose::identity(s.skeleton.joint_count());
  Rng rng(splitmix64(seed ^ 0x5eedf00dULL));

  s.skin_color = jitter_color(kSkinPalette[size_t(rng.uniform_int(0, 5))], rng, 0.04);

  // capsule indices in default_skeleton: 0 torso, 1 head, 2/3 left arm,
  // 4/5 right arm, 6/7 legs
  GarmentShell pants;
  const double pants_end = 0.55 + rng.uniform(-0.06, 0.10);
  pants.pieces = {{6, 0.04, pants_end}, {7, 0.04, pants_end}};
  pants.color = jitter_color(kGarmentPalette[size_t(rng.uniform_int(0, 9))], rng);

  GarmentShell shirt;
  const double sleeve = 0.55 + rng.uniform(-0.10, 0.15);
  shirt.pieces = {{0, 0.18, 1.0}, {2, 0.0, sleeve}, {4, 0.0, sleeve}};
  shirt.color = jitter_color(kGarmentPalette[size_t(rng.uniform_int(0, 9))], rng);

  GarmentShell shoes;
  const double shoe_top = 0.86 + rng.uniform(-0.03, 0.03);
  shoes.pieces = {{6, shoe_top, 1.0}, {7, shoe_top, 1.0}};
  shoes.thickness = 0.045;
  shoes.color = jitter_color(kGarmentPalette[size_t(rng.uniform_int(0, 9))], rng);

  s.shells = {pants, shirt, shoes};
  return s;
}

ImageF render_reference(const SyntheticSubject& subject, const Camera& cam, int layer,
                        const BBox& bbox, int n_samples, const Eigen::Vector3d& background) {
  ImageF img(cam.width, cam.height, 4);
#pragma omp parallel for schedule(dynamic)
  for (int y = 0; y < cam.height; ++y) {
    std::vector<Eigen::Vector3d> colors(static_cast<size_t>(n_samples));
    std::vector<double> sigmas(static_cast<size_t>(n_samples), 0.0);
    std::vector<double> deltas(static_cast<size_t>(n_samples), 0.0);
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = generate_ray(cam, x, y, bbox);
      if (!ray.hits_bounds) {
        for (int a = 0; a < 3; ++a) img.at(x, y, a) = float(background[a]);
        img.at(x, y, 3) = 0.f;
        continue;
      }
      const double step = (ray.t_far - ray.t_near) / double(n_samples);
      for (int k = 0; k < n_samples; ++k) {
        const Eigen::Vector3d p = ray.origin + (ray.t_near + (k + 0.5) * step) * ray.dir;
        sigmas[size_t(k)] = subject.density_at(p, layer);
        colors[size_t(k)] = sigmas[size_t(k)] > 0 ? subject.color_at(p, layer)
                                                  : Eigen::Vector3d::Zero();
        deltas[size_t(k)] = step;
      }
      const CompositeResult out = composite(colors, sigmas, deltas, background);
      for (int a = 0; a < 3; ++a) img.at(x, y, a) = float(std::clamp(out.rgb[a], 0.0, 1.0));
      img.at(x, y, 3) = float(std::clamp(out.mask, 0.0, 1.0));
    }
  }
  return img;
}

std::vector<Camera> spherical_cameras(int n_views, const Eigen::Vector3d& target, int width,
                                      int height, uint64_t seed, double radius) {
  std::vector<Camera> cams;
  Rng rng(splitmix64(seed ^ 0xca4e5aULL));
  for (int i = 0; i < n_views; ++i) {
    const double az = 2.0 * M_PI * double(i) / double(n_views);
    const double el = rng.uniform(-0.22, 0.35);
    const Eigen::Vector3d pos =
        target + radius * Eigen::Vector3d(std::sin(az) * std::cos(el), std::sin(el),
                                          std::cos(az) * std::cos(el));
    cams.push_back(Camera::look_at(pos, target, width, height, 0.62));
  }
  return cams;
}

void save_pose(const std::string& path, const Pose& pose) {
  std::ofstream os(path);
  require_io(bool(os), "cannot open for write: " + path);
  os << "root_translation " << pose.root_translation.x() << " " << pose.root_translation.y()
     << " " << pose.root_translation.z() << "\n";
  for (size_t j = 0; j < pose.axis_angle.size(); ++j)
    os << "joint " << j << " " << pose.axis_angle[j].x() << " " << pose.axis_angle[j].y() << " "
       << pose.axis_angle[j].z() << "\n";
}

Pose load_pose(const std::string& path) {
  std::ifstream is(path);
  require_io(bool(is), "cannot open: " + path);
  Pose pose;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "root_translation") {
      ls >> pose.root_translation.x() >> pose.root_translation.y() >> pose.root_translation.z();
    } else if (tag == "joint") {
      int idx;
      Eigen::Vector3d a;
      ls >> idx >> a.x() >> a.y() >> a.z();
      pose.axis_angle.push_back(a);
    }
    require_io(bool(ls), "bad pose line in " + path);
  }
  return pose;
}

std::string DatasetManifest::image_path(int subject, int layer, int view) const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "subject_%04d/layer_%d/view_%04d.png", subject, layer, view);
  return (fs::path(root) / buf).string();
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream os(path);
  require_io(bool(os), "cannot open for write: " + path);
  os << "subjects " << n_subjects << "\n";
  os << "views " << n_views << "\n";
  os << "layers " << n_layers << "\n";
  os << "size " << width << " " << height << "\n";
  os << "seed " << seed << "\n";
  os << "cameras " << cameras_file << "\n";
  os << "pose " << pose_file << "\n";
  os << "skeleton " << skeleton_file << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream is(path);
  require_io(bool(is), "cannot open manifest: " + path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "subjects") ls >> m.n_subjects;
    else if (tag == "views") ls >> m.n_views;
    else if (tag == "layers") ls >> m.n_layers;
    else if (tag == "size") ls >> m.width >> m.height;
    else if (tag == "seed") ls >> m.seed;
    else if (tag == "cameras") ls >> m.cameras_file;
    else if (tag == "pose") ls >> m.pose_file;
    else if (tag == "skeleton") ls >> m.skeleton_file;
    require_io(bool(ls), "bad manifest line in " + path);
  }
  require_io(m.n_subjects > 0 && m.n_views > 0, "manifest missing counts: " + path);
  return m;
}

void DatasetManifest::validate_files() const {
  auto exists = [&](const std::string& rel) {
    require_io(fs::exists(fs::path(root) / rel), "dataset file missing: " + rel);
  };
  exists(cameras_file);
  exists(pose_file);
  exists(skeleton_file);
  for (int s = 0; s < n_subjects; ++s)
    for (int l = 0; l < n_layers; ++l)
      for (int v = 0; v < n_views; ++v)
        require_io(fs::exists(image_path(s, l, v)), "dataset image missing: " + image_path(s, l, v));
}

DatasetManifest build_dataset(int n_subjects, int n_views, const std::string& out_dir,
                              int image_size, uint64_t seed, int ref_samples) {
  require(n_subjects > 0 && n_views > 0 && image_size > 0, "build_dataset: bad counts");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require_io(fs::exists(out_dir), "cannot create dataset directory: " + out_dir);

  DatasetManifest m;
  m.root = out_dir;
  m.n_subjects = n_subjects;
  m.n_views = n_views;
  m.width = m.height = image_size;
  m.seed = seed;

  const SyntheticSubject probe = make_subject(seed);  // shared rig geometry
  const BBox bbox;
  const std::vector<Camera> cams =
      spherical_cameras(n_views, probe.centroid(), image_size, image_size, seed);
  save_cameras((fs::path(out_dir) / m.cameras_file).string(), cams);
  save_pose((fs::path(out_dir) / m.pose_file).string(), probe.pose);
  save_skeleton((fs::path(out_dir) / m.skeleton_file).string(), probe.skeleton);

  for (int s = 0; s < n_subjects; ++s) {
    const SyntheticSubject subject = make_subject(splitmix64(seed) + uint64_t(s));
    for (int l = 0; l < 4; ++l) {
      fs::create_directories(fs::path(m.image_path(s, l, 0)).parent_path(), ec);
      for (int v = 0; v < n_views; ++v) {
        ImageF img = render_reference(subject, cams[size_t(v)], l, bbox, ref_samples);
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x)
            img.at(x, y, 3) = img.at(x, y, 3) > 0.5f ? 1.f : 0.f;  // binary mask label
        write_png(m.image_path(s, l, v), img);
      }
    }
  }
  m.save((fs::path(out_dir) / "manifest.txt").string());
  return m;
}

}  // namespace lf
