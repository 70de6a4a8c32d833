#include <fstream>
#include <iomanip>
#include <sstream>

#include "layerfield/camera.hpp"

namespace lf {

void save_cameras(const std::string& path, const std::vector<Camera>& cams) {
  std::ofstream os(path);
  require_io(bool(os), "cannot open for write: " + path);
  os << std::setprecision(17);
  os << "# per-view pinhole intrinsics and world-from-camera matrix\n";
  os << "count " << cams.size() << "\n";
  for (size_t i = 0; i < cams.size(); ++i) {
    const Camera& c = cams[i];
    os << "camera " << i << "\n";
    os << "size " << c.width << " " << c.height << "\n";
    os << "intrinsics " << c.fx << " " << c.fy << " " << c.cx << " " << c.cy << "\n";
    os << "world_from_cam\n";
    const Eigen::Matrix4d m = c.world_from_cam.matrix();
    for (int r = 0; r < 4; ++r)
      os << m(r, 0) << " " << m(r, 1) << " " << m(r, 2) << " " << m(r, 3) << "\n";
  }
}

std::vector<Camera> load_cameras(const std::string& path) {
  std::ifstream is(path);
  require_io(bool(is), "cannot open: " + path);
  std::vector<Camera> cams;
  std::string line;
  Camera cur;
  bool in_camera = false;
  auto flush = [&] {
    if (in_camera) {
      cur.validate();
      cams.push_back(cur);
    }
  };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "count") continue;
    if (tag == "camera") {
      flush();
      cur = Camera{};
      in_camera = true;
    } else if (tag == "size") {
      ls >> cur.width >> cur.height;
    } else if (tag == "intrinsics") {
      ls >> cur.fx >> cur.fy >> cur.cx >> cur.cy;
    } else if (tag == "world_from_cam") {
      Eigen::Matrix4d m;
      for (int r = 0; r < 4; ++r) {
        require_io(bool(std::getline(is, line)), "truncated camera matrix in " + path);
        std::istringstream ms(line);
        ms >> m(r, 0) >> m(r, 1) >> m(r, 2) >> m(r, 3);
        require_io(bool(ms), "bad camera matrix row in " + path);
      }
      cur.world_from_cam.matrix() = m;
    }
    require_io(bool(ls) || tag == "world_from_cam", "bad camera line in " + path);
  }
  flush();
  require_io(!cams.empty(), "no cameras found in " + path);
  return cams;
}

}  // namespace lf
