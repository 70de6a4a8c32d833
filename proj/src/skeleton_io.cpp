#include <fstream>
#include <sstream>

#include "layerfield/body.hpp"

namespace lf {

// Nine joints carrying eight bone capsules: torso, head, two two-segment
// arms, two legs. Spans roughly [-0.8, 0.66] vertically inside the unit box.
Skeleton default_skeleton() {
  Skeleton s;
  auto add = [&s](const std::string& name, int parent, double x, double y, double z) {
    s.names.push_back(name);
    s.parents.push_back(parent);
    s.rest_joints.emplace_back(x, y, z);
  };
  add("pelvis", -1, 0.0, -0.10, 0.0);
  add("chest", 0, 0.0, 0.32, 0.0);
  add("head", 1, 0.0, 0.56, 0.0);
  add("l_elbow", 1, -0.22, 0.18, 0.0);
  add("l_hand", 3, -0.34, -0.06, 0.0);
  add("r_elbow", 1, 0.22, 0.18, 0.0);
  add("r_hand", 5, 0.34, -0.06, 0.0);
  add("l_foot", 0, -0.11, -0.72, 0.0);
  add("r_foot", 0, 0.11, -0.72, 0.0);
  s.capsules = {
      {0, 1, 0.155},  // torso
      {1, 2, 0.100},  // head
      {1, 3, 0.055},  // upper arms
      {3, 4, 0.050},  // forearms
      {1, 5, 0.055},
      {5, 6, 0.050},
      {0, 7, 0.075},  // legs
      {0, 8, 0.075},
  };
  s.validate();
  return s;
}

void save_skeleton(const std::string& path, const Skeleton& skel) {
  std::ofstream os(path);
  require_io(bool(os), "cannot open for write: " + path);
  os << "# skeleton: joint <name> <parent> <x> <y> <z>; capsule <ja> <jb> <radius>\n";
  os << "joints " << skel.joint_count() << "\n";
  for (int j = 0; j < skel.joint_count(); ++j) {
    const auto& p = skel.rest_joints[size_t(j)];
    os << "joint " << skel.names[size_t(j)] << " " << skel.parents[size_t(j)] << " " << p.x()
       << " " << p.y() << " " << p.z() << "\n";
  }
  os << "capsules " << skel.capsules.size() << "\n";
  for (const auto& c : skel.capsules)
    os << "capsule " << c.joint_a << " " << c.joint_b << " " << c.radius << "\n";
}

Skeleton load_skeleton(const std::string& path) {
  std::ifstream is(path);
  require_io(bool(is), "cannot open: " + path);
  Skeleton s;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "joint") {
      std::string name;
      int parent;
      double x, y, z;
      ls >> name >> parent >> x >> y >> z;
      require_io(bool(ls), "bad joint line in " + path);
      s.names.push_back(name);
      s.parents.push_back(parent);
      s.rest_joints.emplace_back(x, y, z);
    } else if (tag == "capsule") {
      Capsule c;
      ls >> c.joint_a >> c.joint_b >> c.radius;
      require_io(bool(ls), "bad capsule line in " + path);
      s.capsules.push_back(c);
    }
  }
  s.validate();
  return s;
}

}  // namespace lf
