#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "geomrep/error.hpp"

namespace geomrep {

inline constexpr int kDefaultJoints = 16;
inline constexpr double kPi = 3.14159265358979323846;

using PointsMatrix3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PointsMatrix2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Proper 3x3 rotation. Construction from a raw matrix validates
/// orthonormality and det = +1 to within 1e-9.
class Rotation3 {
 public:
  static constexpr double kTolerance = 1e-9;

  Rotation3() : m_(Eigen::Matrix3d::Identity()) {}

  static Rotation3 from_matrix(const Eigen::Matrix3d& m);
  static Rotation3 about_axis(const Eigen::Vector3d& axis, double angle_rad);
  static Rotation3 identity() { return Rotation3(); }

  /// Re-orthonormalizes via SVD. For accumulating products, not for validation.
  static Rotation3 nearest(const Eigen::Matrix3d& m);

  static bool is_valid(const Eigen::Matrix3d& m, double tol = kTolerance);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Rotation3 inverse() const { return Rotation3(m_.transpose(), Unchecked{}); }

  Rotation3 operator*(const Rotation3& o) const { return Rotation3(m_ * o.m_, Unchecked{}); }
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

 private:
  struct Unchecked {};
  Rotation3(const Eigen::Matrix3d& m, Unchecked) : m_(m) {}

  Eigen::Matrix3d m_;
};

/// Pinhole camera with world->camera extrinsics. Units: mm and pixels.
/// Camera frame: x right, y down, z forward.
struct Camera {
  Rotation3 rotation;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector2d focal{1000.0, 1000.0};
  Eigen::Vector2d principal_point{500.0, 500.0};
  Eigen::Vector2d image_size{1000.0, 1000.0};

  void validate() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  Eigen::Vector3d center() const { return -(rotation.matrix().transpose() * translation); }
  Eigen::Matrix<double, 3, 4> projection_matrix() const;
};

enum class Frame : std::uint8_t { kWorld, kCamera, kRootRelative };

struct Pose3D {
  PointsMatrix3 joints;
  Frame frame = Frame::kWorld;

  int num_joints() const { return static_cast<int>(joints.rows()); }
  bool is_finite() const { return joints.allFinite(); }
};

/// K keypoints in pixels plus per-joint visibility.
struct Keypoints2D {
  PointsMatrix2 points;
  std::vector<std::uint8_t> visible;

  static Keypoints2D all_visible(PointsMatrix2 pts) {
    Keypoints2D kp;
    kp.visible.assign(static_cast<std::size_t>(pts.rows()), 1);
    kp.points = std::move(pts);
    return kp;
  }
  int size() const { return static_cast<int>(points.rows()); }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Virtual cameras on a torus around a look-at point.
struct TorusSampler {
  double radius_mm = 5000.0;
  Interval azimuth{0.0, 2.0 * kPi};
  Interval elevation{-15.0 * kPi / 180.0, 15.0 * kPi / 180.0};
  Eigen::Vector2d focal{1150.0, 1150.0};
  Eigen::Vector2d image_size{1000.0, 1000.0};
  std::mt19937_64 rng{0};

  void validate() const;
};

/// Maps camera-i coordinates to camera-j coordinates: R_j * R_i^T.
Rotation3 rotation_between(const Camera& cam_i, const Camera& cam_j);

/// Pinhole projection of a world-frame pose. Throws kBehindCamera naming
/// every joint with camera-frame z <= 0.
Keypoints2D project(const Pose3D& pose, const Camera& cam);

/// Camera at `position` whose optical axis passes through `target`; the
/// principal point is the image center and image rows run against world z.
Camera look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                      const Eigen::Vector2d& focal, const Eigen::Vector2d& image_size);

/// Camera at (radius, azimuth, elevation) about look_at, optical axis
/// through look_at, world z up.
Camera camera_on_torus(const Eigen::Vector3d& look_at, double radius_mm, double azimuth,
                       double elevation, const Eigen::Vector2d& focal,
                       const Eigen::Vector2d& image_size);

Camera sample_virtual_camera(TorusSampler& sampler, const Eigen::Vector3d& look_at);

struct TriangulationView {
  const Keypoints2D* keypoints;
  const Camera* camera;
};

struct Triangulation {
  Pose3D pose;
  double rms_reprojection_px = 0.0;
  std::vector<double> joint_reprojection_px;
};

/// Per-joint DLT least squares over every view in which the joint is
/// visible. Throws kDegenerateGeometry when a joint's system is rank
/// deficient (e.g. coincident camera centers) or has fewer than 2 views.
Triangulation triangulate(std::span<const TriangulationView> views);

struct Alignment {
  Pose3D aligned;
  double residual_mm = 0.0;
  double scale = 1.0;
  Rotation3 rotation;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Closed-form similarity (or rigid) alignment of pred onto gt with det = +1.
Alignment procrustes_align(const Pose3D& pred, const Pose3D& gt, bool with_scale);

/// Mean Euclidean distance between corresponding rows.
double mean_joint_distance(const PointsMatrix3& a, const PointsMatrix3& b);

}  // namespace geomrep
