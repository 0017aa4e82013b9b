#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geomrep/geometry.hpp"
#include "geomrep/skeleton.hpp"

namespace geomrep {

/// Per-joint Euler limits (x, y, z), radians. A joint's local rotation is
/// Rx(x) * Ry(y) * Rz(z) applied to its parent's frame; for the root it is
/// the global body orientation.
struct JointLimits {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& angles);

struct PoseFamily {
  std::string name;
  std::vector<JointLimits> limits;
  Interval root_height_mm;
};

/// Three presets over the default body: neutral, reach, crouch.
std::vector<PoseFamily> default_pose_families();

/// Unit bone directions of the rest pose, expressed in the parent frame.
std::vector<Eigen::Vector3d> default_rest_directions();

struct PoseSampler {
  KinematicTree tree;
  std::vector<Eigen::Vector3d> rest_directions;
  std::vector<JointLimits> joint_angle_limits;
  Interval root_height_range_mm{900.0, 900.0};
  std::mt19937_64 rng{0};

  void validate() const;
};

PoseSampler default_pose_sampler(std::uint64_t seed);

struct SampledPose {
  Pose3D pose;
  std::vector<Eigen::Vector3d> angles;
};

/// Places the root at (0, 0, root_height) and walks the tree:
/// child = parent + R_child * (bone_length * rest_direction).
Pose3D forward_kinematics(const KinematicTree& tree,
                          const std::vector<Eigen::Vector3d>& rest_directions,
                          const std::vector<Eigen::Vector3d>& angles, double root_height_mm);

SampledPose sample_pose_with_angles(PoseSampler& sampler);
Pose3D sample_pose(PoseSampler& sampler);

/// Square crop around the projected root with a fixed physical extent at
/// the root's depth; keypoints are re-expressed in a reference_size frame.
struct CropParams {
  double extent_mm = 2400.0;
  double reference_size = 256.0;
};

Keypoints2D crop_keypoints(const Keypoints2D& image_kp, const Pose3D& world_pose,
                           const Camera& cam, int root, const CropParams& crop);

struct PairMeta {
  std::int64_t id = 0;
  int subject = 0;
  int family = 0;
  int cam_i = -1;  // -1 for virtual cameras
  int cam_j = -1;
  bool is_virtual = false;
  std::int64_t t = 0;  // acquisition (pose) index
};

struct ViewPair {
  SkeletonMap source;
  SkeletonMap target;
  Rotation3 rot_ij;
  Rotation3 rot_ji;
  PairMeta meta;
  /// Cropped source/target keypoints the maps were rasterized from.
  Keypoints2D source_keypoints;
  Keypoints2D target_keypoints;
};

struct ViewParams {
  RasterParams raster;
  CropParams crop;
};

/// Projects, crops and rasterizes both views. Throws kBehindCamera when
/// either camera cannot see every joint.
ViewPair make_view_pair(const Pose3D& pose, const Camera& cam_i, const Camera& cam_j,
                        const KinematicTree& tree, const ViewParams& params);

struct CalibratedView {
  Keypoints2D keypoints;  // full-image pixels
  Camera camera;
};

/// Triangulates a skeleton from >= 2 real views and renders `count` pairs
/// seen from freshly sampled torus cameras. Returns an empty list (and
/// reports through `skipped_reason`) when triangulation is degenerate.
std::vector<ViewPair> augment_virtual_pairs(const std::vector<CalibratedView>& views,
                                            TorusSampler& sampler, int count,
                                            const KinematicTree& tree, const ViewParams& params,
                                            std::string* skipped_reason = nullptr);

/// Bit-packed binary skeleton map (LSB-first, GART kBits order).
struct PackedMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bytes;

  static PackedMap pack(const SkeletonMap& m);
  SkeletonMap unpack() const;
  /// Writes channels*height*width floats.
  void unpack_into(float* dst) const;
  std::size_t elements() const { return static_cast<std::size_t>(channels) * height * width; }
  friend bool operator==(const PackedMap&, const PackedMap&) = default;
};

struct StoredPair {
  PackedMap source;
  PackedMap target;
  Rotation3 rot_ij;
  Rotation3 rot_ji;
  PairMeta meta;
  Keypoints2D source_keypoints;
  /// Root-relative pose in the source camera frame, mm. Real pairs only.
  std::optional<PointsMatrix3> label;
};

struct DatasetManifest {
  int version = 1;
  std::int64_t n_pairs = 0;  // N_T
  int n_viewpoints = 0;      // V
  KinematicTree tree;
  int map_channels = 15;
  int map_height = 64;
  int map_width = 64;
  ViewParams view;
  std::vector<Camera> cameras;
  std::vector<double> subject_scales;
  std::vector<int> train_subjects;
  std::vector<int> test_subjects;
  std::vector<int> train_cameras;
  std::vector<std::string> families;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  bool has_labels = false;
  std::vector<PairMeta> index;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<StoredPair> pairs;

  ViewPair view_pair(std::size_t i) const;
  bool is_train(const PairMeta& m) const;
};

struct RigConfig {
  /// Camera centers, mm; all look at `target`.
  std::vector<Eigen::Vector3d> positions;
  Eigen::Vector3d target{0.0, 0.0, 900.0};
  Eigen::Vector2d focal{1150.0, 1150.0};
  Eigen::Vector2d image_size{1000.0, 1000.0};
};

/// Four cameras near the corners of a rectangle at slightly different heights.
RigConfig default_rig();
std::vector<Camera> build_rig(const RigConfig& rig);

struct CorpusConfig {
  std::uint64_t seed = 1;
  int n_pairs = 20000;
  int n_virtual_pairs = 0;
  RigConfig rig = default_rig();
  ViewParams view;
  std::vector<double> subject_scales{1.00, 0.92, 1.08, 0.95, 1.04};
  std::vector<int> test_subjects{4};
  /// Cameras real training pairs (and augmentation) may use; empty = all.
  std::vector<int> train_cameras;
  TorusSampler torus;
  double keypoint_noise_px = 0.0;
  bool with_labels = true;
  std::string config_hash;
};

/// Pure function of the config: per-sample seeds are derived from
/// (seed, sample id) so output does not depend on generation order.
Dataset generate_corpus(const CorpusConfig& config);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Records every file the dataset layer opens.
struct IoAudit {
  std::vector<std::string> opened;
  bool touched(std::string_view fragment) const;
};

struct ReadOptions {
  bool load_labels = false;
  IoAudit* audit = nullptr;
};

std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir, const ReadOptions& options = {});
/// Concatenates datasets with identical tree and map shape; ids are kept
/// and the first manifest's metadata wins.
Dataset read_datasets(const std::vector<std::filesystem::path>& dirs,
                      const ReadOptions& options = {});

std::string pair_file_stem(std::int64_t id);

}  // namespace geomrep
