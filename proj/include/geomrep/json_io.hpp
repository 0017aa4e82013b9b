#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

#include "geomrep/geometry.hpp"
#include "geomrep/skeleton.hpp"

namespace geomrep {

using Json = nlohmann::json;

Json to_json(const Camera& cam);
Camera camera_from_json(const Json& j);

Json to_json(const KinematicTree& tree);
KinematicTree tree_from_json(const Json& j);

Json to_json(const Eigen::Matrix3d& m);
Eigen::Matrix3d matrix3_from_json(const Json& j);

/// FNV-1a over the bytes, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Hash of the canonical (sorted-key, compact) serialization.
std::string json_hash(const Json& j);

/// Reads `key` from `j` or throws kConfig naming `path.key`.
template <typename T>
T require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) {
    throw Error(ErrorKind::kConfig, "missing field " + path + "." + key);
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::kConfig, "field " + path + "." + key + " has the wrong type");
  }
}

}  // namespace geomrep
