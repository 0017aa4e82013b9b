#include "geomrep/model.hpp"

#include "geomrep/losses.hpp"
#include "geomrep/tensor_io.hpp"

namespace geomrep {

namespace fs = std::filesystem;

void GeneratorConfig::validate() const {
  if (map_channels <= 0) throw Error(ErrorKind::kConfig, "model.map_channels must be positive");
  if (latent_points <= 0) throw Error(ErrorKind::kConfig, "model.latent_points must be positive");
  if (widths.empty()) throw Error(ErrorKind::kConfig, "model.widths must not be empty");
  for (int w : widths) {
    if (w <= 0) throw Error(ErrorKind::kConfig, "model.widths entries must be positive");
  }
  const int divisor = 1 << widths.size();
  if (map_size <= 0 || map_size % divisor != 0) {
    throw Error(ErrorKind::kConfig, "model.map_size must be divisible by 2^len(widths)");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw Error(ErrorKind::kConfig, "model.leaky_slope must lie in (0, 1)");
  }
}

Json to_json(const GeneratorConfig& c) {
  return Json{{"map_channels", c.map_channels}, {"map_size", c.map_size},
              {"widths", c.widths},             {"latent_points", c.latent_points},
              {"leaky_slope", c.leaky_slope},   {"output_bias_init", c.output_bias_init}};
}

GeneratorConfig generator_config_from_json(const Json& j) {
  GeneratorConfig c;
  c.map_channels = require<int>(j, "map_channels", "model");
  c.map_size = require<int>(j, "map_size", "model");
  c.widths = require<std::vector<int>>(j, "widths", "model");
  c.latent_points = require<int>(j, "latent_points", "model");
  c.leaky_slope = require<double>(j, "leaky_slope", "model");
  c.output_bias_init = require<double>(j, "output_bias_init", "model");
  c.validate();
  return c;
}

Json to_json(const RegressorConfig& c) {
  return Json{{"input_dim", c.input_dim},
              {"hidden", c.hidden},
              {"output_dim", c.output_dim},
              {"prior_dim", c.prior_dim},
              {"output_scale_mm", c.output_scale_mm}};
}

RegressorConfig regressor_config_from_json(const Json& j) {
  RegressorConfig c;
  c.input_dim = require<int>(j, "input_dim", "regressor");
  c.hidden = require<int>(j, "hidden", "regressor");
  c.output_dim = require<int>(j, "output_dim", "regressor");
  c.prior_dim = require<int>(j, "prior_dim", "regressor");
  c.output_scale_mm = require<double>(j, "output_scale_mm", "regressor");
  return c;
}

LatentCode encode(const Generator<float>& g, const SkeletonMap& s) {
  auto batch = batch_maps<float>({&s});
  return latent_from_row(g.encode(batch, nullptr), 0);
}

SkeletonMap decode(const Generator<float>& g, const LatentCode& code) {
  if (code.size() != g.config().latent_points) {
    throw Error(ErrorKind::kShapeMismatch, "latent has " + std::to_string(code.size()) +
                                               " points, decoder expects " +
                                               std::to_string(g.config().latent_points));
  }
  return unbatch_map(g.decode(latent_to_rows<float>({code}), nullptr), 0);
}

LatentCode rotate_latent(const LatentCode& g, const Rotation3& r) {
  LatentCode out;
  out.points = g.points * r.matrix().transpose();
  return out;
}

LatentCode normalize_latent(const LatentCode& g) {
  auto rows = latent_to_rows<double>({g});
  return latent_from_row(normalize_rows(rows).normalized, 0);
}

Pose3D regress_pose(const PoseRegressor<float>& reg, const LatentCode& g) {
  if (reg.config().prior_dim != 0) {
    throw Error(ErrorKind::kShapeMismatch, "regress_pose needs a latent-only regressor");
  }
  if (3 * g.size() != reg.config().input_dim) {
    throw Error(ErrorKind::kShapeMismatch, "latent size does not match the regressor input");
  }
  const auto y = reg.forward(latent_to_rows<float>({g}), nullptr, nullptr);
  Pose3D pose;
  pose.frame = Frame::kRootRelative;
  const Eigen::Index k = y.cols() / 3;
  pose.joints.resize(k, 3);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (int a = 0; a < 3; ++a) pose.joints(j, a) = static_cast<double>(y(0, 3 * j + a));
  }
  return pose;
}

Eigen::VectorXd inject_prior(const PoseRegressor<float>& reg, const LatentCode& g,
                             const Eigen::VectorXd& baseline_features) {
  if (3 * g.size() != reg.config().prior_dim) {
    throw Error(ErrorKind::kShapeMismatch, "latent size does not match the adapter input");
  }
  nn::Mat<float> feats = baseline_features.transpose().cast<float>();
  const auto out = reg.inject(latent_to_rows<float>({g}), feats);
  return out.row(0).transpose().cast<double>();
}

namespace {

std::string file_name_for(const std::string& param_name) { return param_name + ".gart"; }

}  // namespace

void save_params(const fs::path& dir, const std::vector<const nn::Param<float>*>& params) {
  fs::create_directories(dir);
  Json index = Json::array();
  for (const auto* p : params) {
    std::vector<std::uint32_t> dims(p->shape.begin(), p->shape.end());
    write_gart(dir / file_name_for(p->name),
               GartTensor::from_f32(dims, std::span<const float>(p->value.data(), p->value.size())));
    index.push_back(Json{{"name", p->name}, {"shape", p->shape}});
  }
  write_file(dir / "index.json", index.dump(1) + "\n");
}

void load_params(const fs::path& dir, const nn::ParamList<float>& params) {
  for (auto* p : params) {
    const fs::path file = dir / file_name_for(p->name);
    if (!fs::exists(file)) throw Error(ErrorKind::kMissingInput, "missing parameter file " + file.string());
    const GartTensor t = read_gart(file);
    std::vector<std::uint32_t> dims(p->shape.begin(), p->shape.end());
    if (t.dims != dims) {
      throw Error(ErrorKind::kShapeMismatch, "parameter " + p->name + " in " + file.string() +
                                                 " has a different shape than the model");
    }
    const auto values = t.to_f32();
    p->value = Eigen::Map<const nn::Vec<float>>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
}

}  // namespace geomrep
