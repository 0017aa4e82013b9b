#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "geomrep/losses.hpp"
#include "geomrep/synthdata.hpp"

namespace geomrep {

struct TrainConfig {
  int batch_size = 32;
  int steps = 1000;
  double learning_rate = 1e-3;
  /// The rate drops by decay_factor once step >= decay_at * steps.
  double decay_at = 2.0 / 3.0;
  double decay_factor = 0.1;
  nn::AdamConfig adam;
  std::uint64_t seed = 1;
  /// 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  LossWeights weights;
  /// Labeled samples available to the regression stage.
  int label_budget = 500;
  /// Pose regression stage.
  int regressor_steps = 3000;
  double regressor_learning_rate = 1e-3;
  /// Decoupled: each step scales the weights by (1 - lr * decay).
  double regressor_weight_decay = 1.0;

  void validate() const;
  double lr_at(std::int64_t step) const;
};

Json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");

using PairFilter = std::function<bool(const PairMeta&)>;

/// Channel-major float batch of the selected pairs.
PairBatch<float> load_batch(const Dataset& data, const std::vector<std::size_t>& indices);

/// Pairs eligible for representation learning: training subjects, real
/// and virtual.
std::vector<std::size_t> training_pairs(const Dataset& data, const PairFilter& filter = {});

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

Json to_json(const StepRecord& r);

struct RepresentationCheckpoint {
  GeneratorConfig model_config;
  TrainConfig train_config;
  BidirectionalModel<float> model;
  std::int64_t step = 0;
  std::string config_hash;
  std::string dataset_hash;
};

struct RepresentationOptions {
  /// Checkpoint directory; required for resume.
  std::optional<std::filesystem::path> output_dir;
  bool resume = false;
  /// One JSON record per step.
  std::ostream* log = nullptr;
  std::string config_hash;
  PairFilter filter;
  /// Stop after this many steps in this call (resumable runs); -1 = all.
  std::int64_t max_steps_this_call = -1;
};

struct RepresentationResult {
  RepresentationCheckpoint checkpoint;
  std::vector<StepRecord> curve;
};

/// Bidirectional view-synthesis training. Reads only maps, rotations and
/// metadata. Batches are drawn from a per-step seed so a resumed run
/// replays exactly.
RepresentationResult train_representation(const Dataset& data, const GeneratorConfig& model_config,
                                          const TrainConfig& config, const RepresentationOptions& options = {});

void save_representation(const std::filesystem::path& dir, const RepresentationCheckpoint& ckpt,
                         const nn::Adam<float>* optimizer);
RepresentationCheckpoint load_representation(const std::filesystem::path& dir, nn::Adam<float>* optimizer = nullptr);

enum class RegressorInput {
  kLatent,               // frozen-encoder latent only
  kKeypoints,            // 2D keypoints only
  kKeypointsWithPrior,   // 2D keypoints plus the injected latent
};

const char* to_string(RegressorInput kind);
RegressorInput regressor_input_from_string(const std::string& s);

struct RegressionSet {
  nn::Mat<float> keypoints;  // N x 2K, crop frame
  nn::Mat<float> latent;     // N x 3M (empty without an encoder)
  nn::Mat<float> targets;    // N x 3K, mm
  std::vector<std::size_t> indices;
};

/// Inputs and targets for the given pair indices. Pairs without labels are
/// rejected unless `with_targets` is false.
RegressionSet regression_set(const Dataset& data, const std::vector<std::size_t>& indices,
                             const Generator<float>* encoder, bool with_targets = true);

/// Deterministic subset of labeled training-subject real pairs.
std::vector<std::size_t> labeled_subset(const Dataset& data, int budget, std::uint64_t seed,
                                        const PairFilter& filter = {});

struct RegressorCheckpoint {
  RegressorConfig config;
  RegressorInput input = RegressorInput::kLatent;
  PoseRegressor<float> regressor;
  TrainConfig train_config;
  std::int64_t step = 0;
  std::string config_hash;
  std::string encoder_id;
  std::vector<std::int64_t> label_ids;
};

struct RegressorResult {
  RegressorCheckpoint checkpoint;
  std::vector<double> curve;  // per-step mean squared error, m^2
};

/// Trains a regressor on the frozen encoder's latent. The encoder is taken
/// by const reference and never modified.
RegressorResult train_regressor(const Dataset& data, const Generator<float>& encoder, const TrainConfig& config,
                                const PairFilter& filter = {}, std::ostream* log = nullptr);

/// Capacity-matched baseline on 2D keypoints, optionally with the latent
/// of a frozen encoder injected into its hidden layer.
RegressorResult train_baseline_regressor(const Dataset& data, const TrainConfig& config, RegressorInput kind,
                                         const Generator<float>* encoder, const PairFilter& filter = {},
                                         std::ostream* log = nullptr);

/// Predictions (N x 3K, mm) for a prepared set.
nn::Mat<float> predict(const RegressorCheckpoint& ckpt, const RegressionSet& set);

void save_regressor(const std::filesystem::path& dir, const RegressorCheckpoint& ckpt);
RegressorCheckpoint load_regressor(const std::filesystem::path& dir);

/// Digest of the parameters recorded in a checkpoint manifest.
std::string checkpoint_id(const std::filesystem::path& dir);

}  // namespace geomrep
