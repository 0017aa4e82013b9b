#include "geomrep/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "geomrep/tensor_io.hpp"

namespace geomrep {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBatchStream = 0x42415443ull << 24;
constexpr std::uint64_t kRegressorStream = 0x52454752ull << 24;

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

std::string params_digest(const std::vector<const nn::Param<float>*>& params) {
  std::string bytes;
  for (const auto* p : params) {
    bytes.append(p->name);
    bytes.append(reinterpret_cast<const char*>(p->value.data()), static_cast<std::size_t>(p->value.size()) * sizeof(float));
  }
  return fnv1a_hex(bytes);
}

void save_moments(const fs::path& dir, const nn::ParamList<float>& params, nn::Adam<float>& adam) {
  fs::create_directories(dir);
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(m[i].size())};
    write_gart(dir / (params[i]->name + ".m.gart"),
               GartTensor::from_f32(dims, std::span<const float>(m[i].data(), m[i].size())));
    write_gart(dir / (params[i]->name + ".v.gart"),
               GartTensor::from_f32(dims, std::span<const float>(v[i].data(), v[i].size())));
  }
}

void load_moments(const fs::path& dir, const nn::ParamList<float>& params, nn::Adam<float>& adam) {
  auto read = [&](const fs::path& file, nn::Vec<float>& out) {
    if (!fs::exists(file)) throw Error(ErrorKind::kMissingInput, "missing optimizer state " + file.string());
    const auto values = read_gart(file).to_f32();
    if (static_cast<Eigen::Index>(values.size()) != out.size()) {
      throw Error(ErrorKind::kShapeMismatch, file.string() + ": optimizer state size mismatch");
    }
    out = Eigen::Map<const nn::Vec<float>>(values.data(), out.size());
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    read(dir / (params[i]->name + ".m.gart"), adam.first_moments()[i]);
    read(dir / (params[i]->name + ".v.gart"), adam.second_moments()[i]);
  }
}

Json read_manifest(const fs::path& dir, const char* kind) {
  const fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) throw Error(ErrorKind::kMissingInput, "no checkpoint manifest in " + dir.string());
  Json j;
  try {
    j = Json::parse(read_file(file));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kIo, file.string() + ": " + e.what());
  }
  if (j.value("kind", std::string()) != kind) {
    throw Error(ErrorKind::kMissingInput, dir.string() + " is not a " + std::string(kind) + " checkpoint");
  }
  return j;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size <= 0) throw Error(ErrorKind::kConfig, "train.batch_size must be positive");
  if (steps < 0) throw Error(ErrorKind::kConfig, "train.steps must be non-negative");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::kConfig, "train.learning_rate must be positive");
  }
  if (!(decay_at >= 0.0 && decay_at <= 1.0)) throw Error(ErrorKind::kConfig, "train.decay_at must lie in [0, 1]");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw Error(ErrorKind::kConfig, "train.decay_factor must lie in (0, 1]");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw Error(ErrorKind::kConfig, "train.adam hyperparameters out of range");
  }
  if (checkpoint_every < 0) throw Error(ErrorKind::kConfig, "train.checkpoint_every must be non-negative");
  if (label_budget < 0) throw Error(ErrorKind::kConfig, "train.label_budget must be non-negative");
  if (regressor_steps < 0) throw Error(ErrorKind::kConfig, "train.regressor_steps must be non-negative");
  if (!(regressor_learning_rate > 0.0) || !std::isfinite(regressor_learning_rate)) {
    throw Error(ErrorKind::kConfig, "train.regressor_learning_rate must be positive");
  }
  if (!(regressor_weight_decay >= 0.0) || !std::isfinite(regressor_weight_decay)) {
    throw Error(ErrorKind::kConfig, "train.regressor_weight_decay must be >= 0");
  }
  weights.validate();
}

double TrainConfig::lr_at(std::int64_t step) const {
  const double boundary = decay_at * static_cast<double>(steps);
  return static_cast<double>(step) >= boundary ? learning_rate * decay_factor : learning_rate;
}

Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"steps", c.steps},
              {"learning_rate", c.learning_rate},
              {"decay_at", c.decay_at},
              {"decay_factor", c.decay_factor},
              {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"weights", to_json(c.weights)},
              {"label_budget", c.label_budget},
              {"regressor_steps", c.regressor_steps},
              {"regressor_learning_rate", c.regressor_learning_rate},
              {"regressor_weight_decay", c.regressor_weight_decay}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  reject_unknown(j, {"batch_size", "steps", "learning_rate", "decay_at", "decay_factor", "adam", "seed",
                     "checkpoint_every", "weights", "label_budget", "regressor_steps", "regressor_learning_rate",
                     "regressor_weight_decay"},
                 path);
  TrainConfig c;
  read_opt(j, "batch_size", path, c.batch_size);
  read_opt(j, "steps", path, c.steps);
  read_opt(j, "learning_rate", path, c.learning_rate);
  read_opt(j, "decay_at", path, c.decay_at);
  read_opt(j, "decay_factor", path, c.decay_factor);
  read_opt(j, "seed", path, c.seed);
  read_opt(j, "checkpoint_every", path, c.checkpoint_every);
  read_opt(j, "label_budget", path, c.label_budget);
  read_opt(j, "regressor_steps", path, c.regressor_steps);
  read_opt(j, "regressor_learning_rate", path, c.regressor_learning_rate);
  read_opt(j, "regressor_weight_decay", path, c.regressor_weight_decay);
  if (j.contains("adam")) {
    const Json& a = j.at("adam");
    reject_unknown(a, {"beta1", "beta2", "eps"}, path + ".adam");
    read_opt(a, "beta1", path + ".adam", c.adam.beta1);
    read_opt(a, "beta2", path + ".adam", c.adam.beta2);
    read_opt(a, "eps", path + ".adam", c.adam.eps);
  }
  if (j.contains("weights")) {
    const Json& w = j.at("weights");
    reject_unknown(w, {"w_recon_fwd", "w_recon_bwd", "w_consistency"}, path + ".weights");
    read_opt(w, "w_recon_fwd", path + ".weights", c.weights.w_recon_fwd);
    read_opt(w, "w_recon_bwd", path + ".weights", c.weights.w_recon_bwd);
    read_opt(w, "w_consistency", path + ".weights", c.weights.w_consistency);
  }
  c.validate();
  return c;
}

PairBatch<float> load_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  const auto& m = data.manifest;
  const int n = static_cast<int>(indices.size());
  PairBatch<float> b;
  b.source = nn::FeatureMap<float>(m.map_channels, n, m.map_height, m.map_width);
  b.target = nn::FeatureMap<float>(m.map_channels, n, m.map_height, m.map_width);
  const Eigen::Index hw = Eigen::Index(m.map_height) * m.map_width;
  std::vector<float> buf(static_cast<std::size_t>(m.map_channels * hw));
  for (int k = 0; k < n; ++k) {
    const StoredPair& p = data.pairs.at(indices[static_cast<std::size_t>(k)]);
    for (auto [packed, dst] : {std::pair{&p.source, &b.source}, std::pair{&p.target, &b.target}}) {
      packed->unpack_into(buf.data());
      for (int c = 0; c < m.map_channels; ++c) {
        std::copy_n(buf.data() + c * hw, hw, dst->data.row(c).data() + Eigen::Index(k) * hw);
      }
    }
    b.rot_ij.push_back(p.rot_ij.matrix());
    b.rot_ji.push_back(p.rot_ji.matrix());
    b.ids.push_back(p.meta.id);
  }
  return b;
}

std::vector<std::size_t> training_pairs(const Dataset& data, const PairFilter& filter) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const PairMeta& m = data.pairs[i].meta;
    if (!data.is_train(m)) continue;
    if (filter && !filter(m)) continue;
    out.push_back(i);
  }
  return out;
}

Json to_json(const StepRecord& r) {
  return Json{{"step", r.step},
              {"lr", r.lr},
              {"total", r.loss.total},
              {"recon_fwd", r.loss.recon_fwd},
              {"recon_bwd", r.loss.recon_bwd},
              {"consistency", r.loss.consistency}};
}

void save_representation(const fs::path& dir, const RepresentationCheckpoint& ckpt, const nn::Adam<float>* optimizer) {
  fs::create_directories(dir);
  auto& model = const_cast<BidirectionalModel<float>&>(ckpt.model);
  const auto params = model.params();
  const auto cparams = const_params(params);
  save_params(dir / "params", cparams);
  Json j{{"kind", "representation"},
         {"model", to_json(ckpt.model_config)},
         {"train", to_json(ckpt.train_config)},
         {"step", ckpt.step},
         {"seeds", {{"init", ckpt.train_config.seed}}},
         {"config_hash", ckpt.config_hash},
         {"dataset_hash", ckpt.dataset_hash},
         {"checkpoint_id", params_digest(cparams)}};
  if (optimizer) {
    save_moments(dir / "optimizer", params, const_cast<nn::Adam<float>&>(*optimizer));
    j["optimizer_steps"] = optimizer->steps();
  }
  write_file(dir / "manifest.json", j.dump(1) + "\n");
}

RepresentationCheckpoint load_representation(const fs::path& dir, nn::Adam<float>* optimizer) {
  const Json j = read_manifest(dir, "representation");
  RepresentationCheckpoint c;
  try {
    c.model_config = generator_config_from_json(j.at("model"));
    c.train_config = train_config_from_json(j.at("train"));
    c.step = j.at("step").get<std::int64_t>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.dataset_hash = j.value("dataset_hash", std::string());
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kIo, dir.string() + ": malformed checkpoint manifest (" + e.what() + ")");
  }
  c.model = BidirectionalModel<float>(c.model_config, c.train_config.seed);
  const auto params = c.model.params();
  load_params(dir / "params", params);
  if (optimizer) {
    *optimizer = nn::Adam<float>(params, c.train_config.adam);
    if (j.contains("optimizer_steps")) {
      load_moments(dir / "optimizer", params, *optimizer);
      optimizer->set_steps(j.at("optimizer_steps").get<std::int64_t>());
    }
  }
  return c;
}

RepresentationResult train_representation(const Dataset& data, const GeneratorConfig& model_config,
                                          const TrainConfig& config, const RepresentationOptions& options) {
  const nn::DenormalGuard ftz;
  config.validate();
  model_config.validate();
  if (data.manifest.map_channels != model_config.map_channels ||
      data.manifest.map_height != model_config.map_size || data.manifest.map_width != model_config.map_size) {
    throw Error(ErrorKind::kShapeMismatch, "dataset map shape does not match the model configuration");
  }
  const auto candidates = training_pairs(data, options.filter);
  if (candidates.empty()) throw Error(ErrorKind::kMissingInput, "no training pairs for representation learning");

  RepresentationResult result;
  RepresentationCheckpoint& ckpt = result.checkpoint;
  nn::Adam<float> adam;
  const bool resuming = options.resume && options.output_dir && fs::exists(*options.output_dir / "manifest.json");
  if (resuming) {
    ckpt = load_representation(*options.output_dir, &adam);
    if (to_json(ckpt.model_config) != to_json(model_config)) {
      throw Error(ErrorKind::kConfig, "resumed checkpoint was trained with a different model configuration");
    }
  } else {
    ckpt.model = BidirectionalModel<float>(model_config, config.seed);
    adam = nn::Adam<float>(ckpt.model.params(), config.adam);
  }
  ckpt.model_config = model_config;
  ckpt.train_config = config;
  ckpt.config_hash = options.config_hash;
  ckpt.dataset_hash = data.manifest.config_hash;

  if (options.output_dir && !resuming) {
    fs::create_directories(*options.output_dir);
    std::ofstream(*options.output_dir / "losses.jsonl", std::ios::trunc);
  }
  std::vector<StepRecord> pending;
  auto flush = [&] {
    if (!options.output_dir) return;
    save_representation(*options.output_dir, ckpt, &adam);
    std::ofstream log(*options.output_dir / "losses.jsonl", std::ios::app);
    for (const auto& r : pending) log << to_json(r).dump() << '\n';
    pending.clear();
  };

  const auto params = ckpt.model.params();
  std::int64_t done_this_call = 0;
  while (ckpt.step < config.steps &&
         (options.max_steps_this_call < 0 || done_this_call < options.max_steps_this_call)) {
    const std::int64_t step = ckpt.step;
    std::mt19937_64 rng(derive_seed(config.seed, kBatchStream + static_cast<std::uint64_t>(step)));
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    std::vector<std::size_t> idx(static_cast<std::size_t>(config.batch_size));
    for (auto& i : idx) i = candidates[pick(rng)];
    const PairBatch<float> batch = load_batch(data, idx);

    ckpt.model.zero_grad();
    const LossBreakdown loss = total_loss(ckpt.model, batch, config.weights, true);
    const std::pair<const char*, double> terms[] = {{"recon_fwd", loss.recon_fwd},
                                                    {"recon_bwd", loss.recon_bwd},
                                                    {"consistency", loss.consistency},
                                                    {"total", loss.total}};
    for (const auto& [name, value] : terms) {
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "loss term " << name << " is " << value << " at step " << step << "; batch ids [";
        for (std::size_t k = 0; k < batch.ids.size(); ++k) os << (k ? "," : "") << batch.ids[k];
        os << "]";
        throw Error(ErrorKind::kNonFinite, os.str());
      }
    }
    const double lr = config.lr_at(step);
    adam.step(params, lr);
    ckpt.step = step + 1;
    ++done_this_call;

    StepRecord rec{step, lr, loss};
    if (options.log) *options.log << to_json(rec).dump() << '\n';
    result.curve.push_back(rec);
    pending.push_back(rec);
    if (config.checkpoint_every > 0 && ckpt.step % config.checkpoint_every == 0) flush();
  }
  flush();
  return result;
}

const char* to_string(RegressorInput kind) {
  switch (kind) {
    case RegressorInput::kLatent: return "latent";
    case RegressorInput::kKeypoints: return "keypoints2d";
    case RegressorInput::kKeypointsWithPrior: return "keypoints2d+latent";
  }
  return "latent";
}

RegressorInput regressor_input_from_string(const std::string& s) {
  for (auto k : {RegressorInput::kLatent, RegressorInput::kKeypoints, RegressorInput::kKeypointsWithPrior}) {
    if (s == to_string(k)) return k;
  }
  throw Error(ErrorKind::kConfig, "unknown regressor input kind '" + s + "'");
}

RegressionSet regression_set(const Dataset& data, const std::vector<std::size_t>& indices,
                             const Generator<float>* encoder, bool with_targets) {
  const nn::DenormalGuard ftz;
  const int k = data.manifest.tree.num_joints();
  const auto n = static_cast<Eigen::Index>(indices.size());
  RegressionSet s;
  s.indices = indices;
  s.keypoints.resize(n, 2 * k);
  if (with_targets) s.targets.resize(n, 3 * k);
  for (Eigen::Index r = 0; r < n; ++r) {
    const StoredPair& p = data.pairs.at(indices[static_cast<std::size_t>(r)]);
    for (int j = 0; j < k; ++j) {
      s.keypoints(r, 2 * j) = static_cast<float>(p.source_keypoints.points(j, 0));
      s.keypoints(r, 2 * j + 1) = static_cast<float>(p.source_keypoints.points(j, 1));
    }
    if (!with_targets) continue;
    if (!p.label) {
      throw Error(ErrorKind::kMissingInput, "pair " + pair_file_stem(p.meta.id) + " has no 3D label");
    }
    for (int j = 0; j < k; ++j) {
      for (int a = 0; a < 3; ++a) s.targets(r, 3 * j + a) = static_cast<float>((*p.label)(j, a));
    }
  }
  if (encoder) {
    s.latent.resize(n, encoder->config().latent_dim());
    constexpr Eigen::Index kChunk = 64;
    for (Eigen::Index start = 0; start < n; start += kChunk) {
      const Eigen::Index len = std::min(kChunk, n - start);
      std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + start + len);
      const PairBatch<float> b = load_batch(data, chunk);
      s.latent.middleRows(start, len) = encoder->encode(b.source, nullptr);
    }
  }
  return s;
}

std::vector<std::size_t> labeled_subset(const Dataset& data, int budget, std::uint64_t seed, const PairFilter& filter) {
  if (budget <= 0) throw Error(ErrorKind::kConfig, "train.label_budget must be positive for regression");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const StoredPair& p = data.pairs[i];
    if (p.meta.is_virtual || !p.label || !data.is_train(p.meta)) continue;
    if (filter && !filter(p.meta)) continue;
    pool.push_back(i);
  }
  if (static_cast<std::size_t>(budget) > pool.size()) {
    throw Error(ErrorKind::kConfig, "train.label_budget " + std::to_string(budget) + " exceeds the " +
                                        std::to_string(pool.size()) + " labeled training samples available");
  }
  std::mt19937_64 rng(derive_seed(seed, kRegressorStream));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(budget));
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

const nn::Mat<float>& input_of(const RegressionSet& set, RegressorInput kind) {
  if (kind == RegressorInput::kLatent) {
    if (set.latent.size() == 0) throw Error(ErrorKind::kDependencyOrder, "latent input requires an encoder");
    return set.latent;
  }
  return set.keypoints;
}

const nn::Mat<float>* prior_of(const RegressionSet& set, RegressorInput kind) {
  if (kind != RegressorInput::kKeypointsWithPrior) return nullptr;
  if (set.latent.size() == 0) throw Error(ErrorKind::kDependencyOrder, "prior injection requires an encoder");
  return &set.latent;
}

nn::Mat<float> gather(const nn::Mat<float>& m, const std::vector<Eigen::Index>& rows) {
  nn::Mat<float> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

RegressorResult fit(const Dataset& data, const RegressionSet& set, RegressorInput kind, const TrainConfig& config,
                    std::ostream* log) {
  const nn::DenormalGuard ftz;
  const nn::Mat<float>& x = input_of(set, kind);
  const nn::Mat<float>* prior = prior_of(set, kind);

  RegressorResult result;
  RegressorCheckpoint& ckpt = result.checkpoint;
  ckpt.input = kind;
  ckpt.train_config = config;
  ckpt.config.input_dim = static_cast<int>(x.cols());
  ckpt.config.output_dim = static_cast<int>(set.targets.cols());
  ckpt.config.prior_dim = prior ? static_cast<int>(prior->cols()) : 0;
  ckpt.regressor = PoseRegressor<float>(ckpt.config, derive_seed(config.seed, kRegressorStream + 1));
  ckpt.regressor.fit_standardization(x, prior);
  for (auto i : set.indices) ckpt.label_ids.push_back(data.pairs[i].meta.id);

  auto params = ckpt.regressor.params();
  nn::Adam<float> adam(params, config.adam);
  const Eigen::Index n = x.rows();
  const auto batch = std::min<Eigen::Index>(config.batch_size, n);
  const float scale = static_cast<float>(ckpt.config.output_scale_mm);
  TrainConfig schedule = config;
  schedule.steps = config.regressor_steps;
  schedule.learning_rate = config.regressor_learning_rate;
  for (std::int64_t step = 0; step < schedule.steps; ++step) {
    std::mt19937_64 rng(derive_seed(config.seed, kRegressorStream + 2 + static_cast<std::uint64_t>(step)));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(batch));
    for (auto& r : rows) r = pick(rng);
    const nn::Mat<float> xb = gather(x, rows);
    const nn::Mat<float> yb = gather(set.targets, rows);
    nn::Mat<float> pb;
    if (prior) pb = gather(*prior, rows);

    typename PoseRegressor<float>::Cache cache;
    const nn::Mat<float> pred = ckpt.regressor.forward(xb, prior ? &pb : nullptr, &cache);
    const nn::Mat<float> diff = (pred - yb) / scale;
    const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(diff.size());
    if (!std::isfinite(loss)) {
      throw Error(ErrorKind::kNonFinite, "regression loss is non-finite at step " + std::to_string(step));
    }
    for (auto* p : params) p->zero_grad();
    ckpt.regressor.backward(diff * (2.0f / (static_cast<float>(diff.size()) * scale)), cache);
    const double lr = schedule.lr_at(step);
    adam.step(params, lr);
    if (config.regressor_weight_decay > 0.0) {
      const auto keep = static_cast<float>(1.0 - lr * config.regressor_weight_decay);
      for (auto* p : params) p->value *= keep;
    }
    result.curve.push_back(loss);
    if (log) *log << Json{{"step", step}, {"regression_mse_m2", loss}}.dump() << '\n';
  }
  ckpt.step = schedule.steps;
  return result;
}

}  // namespace

RegressorResult train_regressor(const Dataset& data, const Generator<float>& encoder, const TrainConfig& config,
                                const PairFilter& filter, std::ostream* log) {
  config.validate();
  const auto subset = labeled_subset(data, config.label_budget, config.seed, filter);
  const RegressionSet set = regression_set(data, subset, &encoder);
  return fit(data, set, RegressorInput::kLatent, config, log);
}

RegressorResult train_baseline_regressor(const Dataset& data, const TrainConfig& config, RegressorInput kind,
                                         const Generator<float>* encoder, const PairFilter& filter,
                                         std::ostream* log) {
  config.validate();
  if (kind == RegressorInput::kLatent) {
    throw Error(ErrorKind::kConfig, "baseline regressors take keypoints2d or keypoints2d+latent");
  }
  if (kind == RegressorInput::kKeypointsWithPrior && !encoder) {
    throw Error(ErrorKind::kDependencyOrder, "prior injection requires an encoder checkpoint");
  }
  const auto subset = labeled_subset(data, config.label_budget, config.seed, filter);
  const RegressionSet set =
      regression_set(data, subset, kind == RegressorInput::kKeypointsWithPrior ? encoder : nullptr);
  return fit(data, set, kind, config, log);
}

nn::Mat<float> predict(const RegressorCheckpoint& ckpt, const RegressionSet& set) {
  const nn::DenormalGuard ftz;
  return ckpt.regressor.forward(input_of(set, ckpt.input), prior_of(set, ckpt.input), nullptr);
}

void save_regressor(const fs::path& dir, const RegressorCheckpoint& ckpt) {
  fs::create_directories(dir);
  auto& reg = const_cast<PoseRegressor<float>&>(ckpt.regressor);
  auto params = reg.params();
  const auto buffers = reg.buffers();
  params.insert(params.end(), buffers.begin(), buffers.end());
  const auto cparams = const_params(params);
  save_params(dir / "params", cparams);
  const Json j{{"kind", "regressor"},
               {"regressor", to_json(ckpt.config)},
               {"input", to_string(ckpt.input)},
               {"train", to_json(ckpt.train_config)},
               {"step", ckpt.step},
               {"seeds", {{"init", ckpt.train_config.seed}}},
               {"config_hash", ckpt.config_hash},
               {"encoder_id", ckpt.encoder_id},
               {"label_ids", ckpt.label_ids},
               {"checkpoint_id", params_digest(cparams)}};
  write_file(dir / "manifest.json", j.dump(1) + "\n");
}

RegressorCheckpoint load_regressor(const fs::path& dir) {
  const Json j = read_manifest(dir, "regressor");
  RegressorCheckpoint c;
  try {
    c.config = regressor_config_from_json(j.at("regressor"));
    c.input = regressor_input_from_string(j.at("input").get<std::string>());
    c.train_config = train_config_from_json(j.at("train"));
    c.step = j.at("step").get<std::int64_t>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.encoder_id = j.at("encoder_id").get<std::string>();
    c.label_ids = j.at("label_ids").get<std::vector<std::int64_t>>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kIo, dir.string() + ": malformed checkpoint manifest (" + e.what() + ")");
  }
  c.regressor = PoseRegressor<float>(c.config, 0);
  auto params = c.regressor.params();
  const auto buffers = c.regressor.buffers();
  params.insert(params.end(), buffers.begin(), buffers.end());
  load_params(dir / "params", params);
  return c;
}

std::string checkpoint_id(const fs::path& dir) {
  const fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) throw Error(ErrorKind::kMissingInput, "no checkpoint manifest in " + dir.string());
  return Json::parse(read_file(file)).value("checkpoint_id", std::string());
}

}  // namespace geomrep
