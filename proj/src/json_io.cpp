#include "geomrep/json_io.hpp"

#include <cstdio>

namespace geomrep {

Json to_json(const Eigen::Matrix3d& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Eigen::Matrix3d matrix3_from_json(const Json& j) {
  Eigen::Matrix3d m;
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::kConfig, "expected a 3x3 matrix");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Json to_json(const Camera& cam) {
  return Json{
      {"rotation", to_json(cam.rotation.matrix())},
      {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}},
      {"focal", {cam.focal.x(), cam.focal.y()}},
      {"principal_point", {cam.principal_point.x(), cam.principal_point.y()}},
      {"image_size", {cam.image_size.x(), cam.image_size.y()}},
  };
}

Camera camera_from_json(const Json& j) {
  Camera cam;
  cam.rotation = Rotation3::from_matrix(matrix3_from_json(j.at("rotation")));
  const auto& t = j.at("translation");
  cam.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
  auto vec2 = [&](const char* key) {
    const auto& v = j.at(key);
    return Eigen::Vector2d(v.at(0).get<double>(), v.at(1).get<double>());
  };
  cam.focal = vec2("focal");
  cam.principal_point = vec2("principal_point");
  cam.image_size = vec2("image_size");
  cam.validate();
  return cam;
}

Json to_json(const KinematicTree& tree) {
  Json limbs = Json::array();
  for (const auto& [c, p] : tree.limb_order) limbs.push_back({c, p});
  return Json{{"parent", tree.parent},
              {"bone_lengths_mm", tree.bone_lengths_mm},
              {"limb_order", limbs},
              {"joint_names", tree.joint_names}};
}

KinematicTree tree_from_json(const Json& j) {
  KinematicTree t;
  t.parent = j.at("parent").get<std::vector<int>>();
  t.bone_lengths_mm = j.at("bone_lengths_mm").get<std::vector<double>>();
  for (const auto& l : j.at("limb_order")) t.limb_order.emplace_back(l.at(0).get<int>(), l.at(1).get<int>());
  if (j.contains("joint_names")) t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  t.validate();
  return t;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string json_hash(const Json& j) { return fnv1a_hex(j.dump()); }

}  // namespace geomrep
