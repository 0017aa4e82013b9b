#include "geomrep/config.hpp"

#include <cmath>
#include <set>

#include "geomrep/tensor_io.hpp"

namespace geomrep {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, path + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorKind::kConfig, "unknown field " + path + "." + key);
  }
}

template <typename T>
void read_opt(const Json& j, const char* key, const std::string& path, T& out) {
  if (j.contains(key)) out = require<T>(j, key, path);
}

Interval read_interval(const Json& j, const char* key, const std::string& path, Interval def) {
  if (!j.contains(key)) return def;
  const std::string field = path + "." + key;
  const Json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw Error(ErrorKind::kConfig, "field " + field + " must be a [lo, hi] pair of numbers");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

Eigen::Vector2d read_vec2(const Json& j, const char* key, const std::string& path, const Eigen::Vector2d& def) {
  if (!j.contains(key)) return def;
  const auto v = require<std::vector<double>>(j, key, path);
  if (v.size() != 2) throw Error(ErrorKind::kConfig, "field " + path + "." + key + " must have 2 entries");
  return {v[0], v[1]};
}

Eigen::Vector3d read_vec3(const Json& v, const std::string& field) {
  std::vector<double> a;
  try {
    a = v.get<std::vector<double>>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::kConfig, "field " + field + " must be a list of 3 numbers");
  }
  if (a.size() != 3) throw Error(ErrorKind::kConfig, "field " + field + " must have 3 entries");
  return {a[0], a[1], a[2]};
}

Json vec(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

void parse_data(const Json& j, RunConfig& rc) {
  const std::string p = "data";
  reject_unknown(j, {"n_pairs", "n_virtual_pairs", "subject_scales", "test_subjects", "train_cameras",
                     "keypoint_noise_px", "with_labels", "map_size", "line_width_px", "crop_extent_mm", "torus",
                     "rig"},
                 p);
  CorpusConfig& c = rc.data;
  read_opt(j, "n_pairs", p, c.n_pairs);
  read_opt(j, "n_virtual_pairs", p, c.n_virtual_pairs);
  read_opt(j, "subject_scales", p, c.subject_scales);
  read_opt(j, "test_subjects", p, c.test_subjects);
  read_opt(j, "train_cameras", p, c.train_cameras);
  read_opt(j, "keypoint_noise_px", p, c.keypoint_noise_px);
  read_opt(j, "with_labels", p, c.with_labels);
  int size = c.view.raster.width;
  read_opt(j, "map_size", p, size);
  c.view.raster.width = c.view.raster.height = size;
  read_opt(j, "line_width_px", p, c.view.raster.line_width_px);
  read_opt(j, "crop_extent_mm", p, c.view.crop.extent_mm);

  if (c.n_pairs <= 0) throw Error(ErrorKind::kConfig, "field data.n_pairs must be positive");
  if (c.n_virtual_pairs < 0) throw Error(ErrorKind::kConfig, "field data.n_virtual_pairs must be non-negative");
  if (c.subject_scales.empty()) throw Error(ErrorKind::kConfig, "field data.subject_scales must not be empty");
  for (double s : c.subject_scales) {
    if (!(s > 0.0)) throw Error(ErrorKind::kConfig, "field data.subject_scales entries must be positive");
  }
  for (int s : c.test_subjects) {
    if (s < 0 || s >= static_cast<int>(c.subject_scales.size())) {
      throw Error(ErrorKind::kConfig, "field data.test_subjects refers to an unknown subject");
    }
  }
  if (!(c.keypoint_noise_px >= 0.0)) throw Error(ErrorKind::kConfig, "field data.keypoint_noise_px must be >= 0");
  if (size <= 0) throw Error(ErrorKind::kConfig, "field data.map_size must be positive");
  if (!(c.view.raster.line_width_px > 0.0)) throw Error(ErrorKind::kConfig, "field data.line_width_px must be positive");
  if (!(c.view.crop.extent_mm > 0.0)) throw Error(ErrorKind::kConfig, "field data.crop_extent_mm must be positive");

  if (j.contains("torus")) {
    const std::string tp = p + ".torus";
    const Json& t = j.at("torus");
    reject_unknown(t, {"radius_mm", "azimuth_range", "elevation_range", "focal", "image_size"}, tp);
    read_opt(t, "radius_mm", tp, c.torus.radius_mm);
    c.torus.azimuth = read_interval(t, "azimuth_range", tp, c.torus.azimuth);
    c.torus.elevation = read_interval(t, "elevation_range", tp, c.torus.elevation);
    c.torus.focal = read_vec2(t, "focal", tp, c.torus.focal);
    c.torus.image_size = read_vec2(t, "image_size", tp, c.torus.image_size);
  }
  const auto& az = c.torus.azimuth;
  if (!(std::isfinite(az.lo) && std::isfinite(az.hi) && az.lo >= 0.0 && az.lo < az.hi && az.hi <= 2.0 * kPi)) {
    throw Error(ErrorKind::kConfig, "field data.torus.azimuth_range must satisfy 0 <= lo < hi <= 2pi");
  }
  const auto& el = c.torus.elevation;
  if (!(std::isfinite(el.lo) && std::isfinite(el.hi) && el.lo > -kPi / 2 && el.lo <= el.hi && el.hi < kPi / 2)) {
    throw Error(ErrorKind::kConfig, "field data.torus.elevation_range must satisfy -pi/2 < lo <= hi < pi/2");
  }
  if (!(c.torus.radius_mm > 0.0)) throw Error(ErrorKind::kConfig, "field data.torus.radius_mm must be positive");
  if (!(c.torus.focal.minCoeff() > 0.0)) throw Error(ErrorKind::kConfig, "field data.torus.focal must be positive");
  if (!(c.torus.image_size.minCoeff() > 0.0)) {
    throw Error(ErrorKind::kConfig, "field data.torus.image_size must be positive");
  }

  if (j.contains("rig")) {
    const std::string rp = p + ".rig";
    const Json& r = j.at("rig");
    reject_unknown(r, {"positions", "target", "focal", "image_size"}, rp);
    if (r.contains("positions")) {
      const Json& ps = r.at("positions");
      if (!ps.is_array() || ps.size() < 2) {
        throw Error(ErrorKind::kConfig, "field data.rig.positions must list at least 2 cameras");
      }
      c.rig.positions.clear();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        c.rig.positions.push_back(read_vec3(ps[i], rp + ".positions[" + std::to_string(i) + "]"));
      }
    }
    if (r.contains("target")) c.rig.target = read_vec3(r.at("target"), rp + ".target");
    c.rig.focal = read_vec2(r, "focal", rp, c.rig.focal);
    c.rig.image_size = read_vec2(r, "image_size", rp, c.rig.image_size);
  }
  for (int cam : c.train_cameras) {
    if (cam < 0 || cam >= static_cast<int>(c.rig.positions.size())) {
      throw Error(ErrorKind::kConfig, "field data.train_cameras refers to an unknown camera");
    }
  }
  if (!c.train_cameras.empty() && c.train_cameras.size() < 2) {
    throw Error(ErrorKind::kConfig, "field data.train_cameras needs at least 2 cameras");
  }
}

void parse_model(const Json& j, RunConfig& rc) {
  const std::string p = "model";
  reject_unknown(j, {"widths", "latent_points", "leaky_slope", "output_bias_init", "regressor_hidden"}, p);
  read_opt(j, "widths", p, rc.model.widths);
  read_opt(j, "latent_points", p, rc.model.latent_points);
  read_opt(j, "leaky_slope", p, rc.model.leaky_slope);
  read_opt(j, "output_bias_init", p, rc.model.output_bias_init);
  read_opt(j, "regressor_hidden", p, rc.regressor_hidden);
  if (rc.regressor_hidden <= 0) throw Error(ErrorKind::kConfig, "field model.regressor_hidden must be positive");
}

void parse_eval(const Json& j, RunConfig& rc) {
  const std::string p = "eval";
  reject_unknown(j, {"protocol", "pck_threshold_mm", "n_thresholds"}, p);
  if (j.contains("protocol")) {
    try {
      rc.eval.protocol = protocol_from_string(require<std::string>(j, "protocol", p));
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, "field eval.protocol: " + std::string(e.what()));
    }
  }
  read_opt(j, "pck_threshold_mm", p, rc.eval.pck_threshold_mm);
  read_opt(j, "n_thresholds", p, rc.eval.n_thresholds);
  if (!(rc.eval.pck_threshold_mm > 0.0)) throw Error(ErrorKind::kConfig, "field eval.pck_threshold_mm must be positive");
  if (rc.eval.n_thresholds < 2) throw Error(ErrorKind::kConfig, "field eval.n_thresholds must be >= 2");
}

}  // namespace

RunConfig parse_run_config(const Json& j) {
  reject_unknown(j, {"data", "model", "train", "eval", "seeds", "output_dir"}, "config");
  RunConfig rc;
  if (j.contains("data")) parse_data(j.at("data"), rc);
  if (j.contains("model")) parse_model(j.at("model"), rc);
  rc.model.map_channels = default_body_tree().num_limbs();
  rc.model.map_size = rc.data.view.raster.width;
  try {
    rc.model.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, std::string(e.what()));
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    if (t.is_object() && t.contains("seed")) throw Error(ErrorKind::kConfig, "field train.seed is set through seeds.train");
    rc.train = train_config_from_json(t, "train");
  }
  if (j.contains("eval")) parse_eval(j.at("eval"), rc);
  if (j.contains("seeds")) {
    const Json& s = j.at("seeds");
    reject_unknown(s, {"data", "train"}, "seeds");
    read_opt(s, "data", "seeds", rc.seeds.data);
    read_opt(s, "train", "seeds", rc.seeds.train);
  }
  rc.train.seed = rc.seeds.train;
  if (j.contains("output_dir")) rc.output_dir = require<std::string>(j, "output_dir", "config");
  return rc;
}

Json RunConfig::to_json() const {
  Json positions = Json::array();
  for (const auto& p : data.rig.positions) positions.push_back(vec(p));
  Json train_json = geomrep::to_json(train);
  train_json.erase("seed");
  return Json{
      {"data",
       {{"n_pairs", data.n_pairs},
        {"n_virtual_pairs", data.n_virtual_pairs},
        {"subject_scales", data.subject_scales},
        {"test_subjects", data.test_subjects},
        {"train_cameras", data.train_cameras},
        {"keypoint_noise_px", data.keypoint_noise_px},
        {"with_labels", data.with_labels},
        {"map_size", data.view.raster.width},
        {"line_width_px", data.view.raster.line_width_px},
        {"crop_extent_mm", data.view.crop.extent_mm},
        {"torus",
         {{"radius_mm", data.torus.radius_mm},
          {"azimuth_range", {data.torus.azimuth.lo, data.torus.azimuth.hi}},
          {"elevation_range", {data.torus.elevation.lo, data.torus.elevation.hi}},
          {"focal", vec(data.torus.focal)},
          {"image_size", vec(data.torus.image_size)}}},
        {"rig",
         {{"positions", positions},
          {"target", vec(data.rig.target)},
          {"focal", vec(data.rig.focal)},
          {"image_size", vec(data.rig.image_size)}}}}},
      {"model",
       {{"widths", model.widths},
        {"latent_points", model.latent_points},
        {"leaky_slope", model.leaky_slope},
        {"output_bias_init", model.output_bias_init},
        {"regressor_hidden", regressor_hidden}}},
      {"train", train_json},
      {"eval",
       {{"protocol", to_string(eval.protocol)},
        {"pck_threshold_mm", eval.pck_threshold_mm},
        {"n_thresholds", eval.n_thresholds}}},
      {"seeds", {{"data", seeds.data}, {"train", seeds.train}}},
      {"output_dir", output_dir.string()},
  };
}

std::string RunConfig::hash() const {
  Json j = to_json();
  j.erase("output_dir");
  return json_hash(j);
}

std::string RunConfig::data_hash() const {
  const Json j{{"data", to_json().at("data")}, {"seed", seeds.data}};
  return json_hash(j);
}

CorpusConfig RunConfig::corpus() const {
  CorpusConfig c = data;
  c.seed = seeds.data;
  c.config_hash = data_hash();
  return c;
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::kConfig, "override '" + assignment + "' is not of the form section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorKind::kConfig, "override path '" + path + "' has an empty component");
    if (!node->is_object()) throw Error(ErrorKind::kConfig, "override path '" + path + "' crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::kConfig, "config file " + path.string() + " not found");
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_run_config(j);
}

}  // namespace geomrep
