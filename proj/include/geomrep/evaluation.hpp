#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geomrep/training.hpp"

namespace geomrep {

/// Root-relative mean per-joint error, mm. Both poses must be in the same frame.
double mpjpe(const Pose3D& pred, const Pose3D& gt, int root = 0);

/// mpjpe after similarity alignment of pred onto gt.
double pmpjpe(const Pose3D& pred, const Pose3D& gt, int root = 0);

/// Root-relative per-joint errors, mm.
std::vector<double> joint_errors(const Pose3D& pred, const Pose3D& gt, int root = 0);

struct PckAuc {
  double pck = 0.0;  // percent
  double auc = 0.0;  // in [0, 1]
};

/// PCK at threshold_mm, AUC = mean PCK/100 over n_thresholds points
/// evenly spaced in [0, threshold_mm].
PckAuc pck_auc(const std::vector<double>& errors_mm, double threshold_mm = 150.0, int n_thresholds = 31);

enum class Protocol { kP1, kP2, kP3 };

const char* to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct SampleRecord {
  std::int64_t id = 0;
  int subject = 0;
  int family = 0;
  int cam = 0;
  double mpjpe = 0.0;
  double pmpjpe = 0.0;
};

struct SubsetMetrics {
  std::string name;
  std::int64_t count = 0;
  double mpjpe = 0.0;
  double pmpjpe = 0.0;
  double pck = 0.0;
  double auc = 0.0;
};

struct EvalReport {
  Protocol protocol = Protocol::kP1;
  SubsetMetrics aggregate;
  std::vector<SubsetMetrics> per_family;
  std::vector<SampleRecord> samples;
  std::string config_hash;
  std::string checkpoint_id;
  std::vector<std::uint64_t> seeds;
  /// The protocol's headline number: mpjpe for P1 and P3, pmpjpe for P2.
  double primary() const;
};

Json to_json(const EvalReport& r);

/// Pair indices a protocol evaluates on: real, labeled test-subject pairs,
/// and for P3 only those whose source camera is outside the training views.
std::vector<std::size_t> protocol_samples(const Dataset& data, Protocol protocol);

/// Evaluates a regressor (and the encoder it depends on, if any).
EvalReport run_protocol(const Dataset& data, const RegressorCheckpoint& regressor, const Generator<float>* encoder,
                        Protocol protocol);

/// Report from precomputed predictions (rows follow `indices`).
EvalReport make_report(const Dataset& data, const std::vector<std::size_t>& indices, const nn::Mat<float>& predictions,
                       Protocol protocol);

/// Mean over pairs of the per-point consistency residual between the
/// forward branch's rotated code and the backward branch's code.
double latent_residual(const BidirectionalModel<float>& model, const Dataset& data,
                       const std::vector<std::size_t>& indices);

/// Mean skeleton IoU of both synthesis directions over the given pairs.
struct SynthesisQuality {
  double recon_fwd = 0.0;
  double recon_bwd = 0.0;
  double iou_fwd = 0.0;
  double iou_bwd = 0.0;
};
SynthesisQuality synthesis_quality(const BidirectionalModel<float>& model, const Dataset& data,
                                   const std::vector<std::size_t>& indices);

struct InterpolationStep {
  LatentCode latent;
  SkeletonMap map;
  std::optional<Pose3D> pose;
};

/// Linear interpolation from a to b in `steps` points, each decoded and
/// (with a latent regressor) regressed.
std::vector<InterpolationStep> interpolate_latents(const LatentCode& a, const LatentCode& b, int steps,
                                                   const Generator<float>& decoder,
                                                   const PoseRegressor<float>* regressor = nullptr);

/// Horizontal strip of colorized skeleton maps as an RGB PNG.
void write_map_strip_png(const std::filesystem::path& path, const std::vector<SkeletonMap>& maps, int scale = 2);

}  // namespace geomrep
