#include "geomrep/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace geomrep {

bool Rotation3::is_valid(const Eigen::Matrix3d& m, double tol) {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).norm();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Rotation3 Rotation3::from_matrix(const Eigen::Matrix3d& m) {
  if (!is_valid(m)) {
    std::ostringstream os;
    os << "matrix is not a proper rotation (|R^T R - I| = "
       << (m.transpose() * m - Eigen::Matrix3d::Identity()).norm()
       << ", det = " << m.determinant() << ")";
    throw Error(ErrorKind::kInvalidRotation, os.str());
  }
  return Rotation3(m, Unchecked{});
}

Rotation3 Rotation3::about_axis(const Eigen::Vector3d& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw Error(ErrorKind::kInvalidRotation, "zero rotation axis");
  const Eigen::Vector3d k = axis / n;
  Eigen::Matrix3d kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  const Eigen::Matrix3d m = Eigen::Matrix3d::Identity() + std::sin(angle_rad) * kx +
                            (1.0 - std::cos(angle_rad)) * kx * kx;
  return Rotation3(m, Unchecked{});
}

Rotation3 Rotation3::nearest(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  return Rotation3(svd.matrixU() * d * svd.matrixV().transpose(), Unchecked{});
}

void Camera::validate() const {
  if (!Rotation3::is_valid(rotation.matrix())) {
    throw Error(ErrorKind::kInvalidRotation, "camera rotation is not a proper rotation");
  }
  if (!(focal.x() > 0.0 && focal.y() > 0.0)) {
    throw Error(ErrorKind::kConfig, "camera focal lengths must be positive");
  }
  if (!(principal_point.x() >= 0.0 && principal_point.x() <= image_size.x() &&
        principal_point.y() >= 0.0 && principal_point.y() <= image_size.y())) {
    throw Error(ErrorKind::kConfig, "camera principal point outside the image");
  }
}

Eigen::Matrix<double, 3, 4> Camera::projection_matrix() const {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = focal.x();
  k(1, 1) = focal.y();
  k(0, 2) = principal_point.x();
  k(1, 2) = principal_point.y();
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = rotation.matrix();
  rt.col(3) = translation;
  return k * rt;
}

Rotation3 rotation_between(const Camera& cam_i, const Camera& cam_j) {
  for (const Camera* c : {&cam_i, &cam_j}) {
    if (!Rotation3::is_valid(c->rotation.matrix())) {
      throw Error(ErrorKind::kInvalidRotation, "camera rotation is not orthonormal");
    }
  }
  return cam_j.rotation * cam_i.rotation.inverse();
}

Keypoints2D project(const Pose3D& pose, const Camera& cam) {
  const int n = pose.num_joints();
  PointsMatrix2 uv(n, 2);
  std::vector<int> behind;
  for (int p = 0; p < n; ++p) {
    const Eigen::Vector3d xc = cam.to_camera(pose.joints.row(p).transpose());
    if (!(xc.z() > 0.0)) {
      behind.push_back(p);
      continue;
    }
    uv(p, 0) = cam.focal.x() * xc.x() / xc.z() + cam.principal_point.x();
    uv(p, 1) = cam.focal.y() * xc.y() / xc.z() + cam.principal_point.y();
  }
  if (!behind.empty()) {
    std::ostringstream os;
    os << "joints behind camera:";
    for (int p : behind) os << ' ' << p;
    throw Error(ErrorKind::kBehindCamera, os.str());
  }
  return Keypoints2D::all_visible(std::move(uv));
}

void TorusSampler::validate() const {
  if (!(radius_mm > 0.0)) throw Error(ErrorKind::kConfig, "torus radius must be positive");
  if (!(azimuth.lo >= 0.0 && azimuth.hi <= 2.0 * kPi && azimuth.lo < azimuth.hi)) {
    throw Error(ErrorKind::kConfig, "azimuth range must be a non-empty subset of [0, 2pi)");
  }
  if (!(elevation.lo > -kPi / 2 && elevation.hi < kPi / 2 && elevation.lo <= elevation.hi)) {
    throw Error(ErrorKind::kConfig,
                "elevation range must be a non-empty subset of (-pi/2, pi/2)");
  }
}

Camera look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                      const Eigen::Vector2d& focal, const Eigen::Vector2d& image_size) {
  const Eigen::Vector3d forward = (target - position).normalized();
  const Eigen::Vector3d side = forward.cross(Eigen::Vector3d::UnitZ());
  if (!(side.norm() > 1e-9)) {
    throw Error(ErrorKind::kDegenerateGeometry, "optical axis parallel to the world up axis");
  }
  const Eigen::Vector3d right = side.normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;

  Camera cam;
  cam.rotation = Rotation3::nearest(r);
  cam.translation = -(cam.rotation * position);
  cam.focal = focal;
  cam.image_size = image_size;
  cam.principal_point = image_size / 2.0;
  return cam;
}

Camera camera_on_torus(const Eigen::Vector3d& look_at, double radius_mm, double azimuth,
                       double elevation, const Eigen::Vector2d& focal,
                       const Eigen::Vector2d& image_size) {
  const Eigen::Vector3d offset(std::cos(elevation) * std::cos(azimuth),
                               std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
  return look_at_camera(look_at + radius_mm * offset, look_at, focal, image_size);
}

Camera sample_virtual_camera(TorusSampler& sampler, const Eigen::Vector3d& look_at) {
  sampler.validate();
  auto draw = [&](const Interval& iv) {
    if (iv.lo == iv.hi) return iv.lo;
    std::uniform_real_distribution<double> u(iv.lo, iv.hi);
    return u(sampler.rng);
  };
  const double az = draw(sampler.azimuth);
  const double el = draw(sampler.elevation);
  return camera_on_torus(look_at, sampler.radius_mm, az, el, sampler.focal, sampler.image_size);
}

Triangulation triangulate(std::span<const TriangulationView> views) {
  if (views.size() < 2) {
    throw Error(ErrorKind::kDegenerateGeometry, "triangulation needs at least 2 views");
  }
  const int n_joints = views.front().keypoints->size();
  std::vector<Eigen::Matrix<double, 3, 4>> projections;
  for (const auto& v : views) {
    if (v.keypoints->size() != n_joints) {
      throw Error(ErrorKind::kShapeMismatch, "views disagree on joint count");
    }
    v.camera->validate();
    projections.push_back(v.camera->projection_matrix());
  }

  Triangulation out;
  out.pose.frame = Frame::kWorld;
  out.pose.joints.resize(n_joints, 3);
  out.joint_reprojection_px.assign(static_cast<std::size_t>(n_joints), 0.0);
  double sq_sum = 0.0;
  int sq_count = 0;

  for (int p = 0; p < n_joints; ++p) {
    Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(views.size()), 3);
    Eigen::VectorXd b(a.rows());
    int rows = 0;
    for (std::size_t v = 0; v < views.size(); ++v) {
      const Keypoints2D& kp = *views[v].keypoints;
      if (!kp.visible[static_cast<std::size_t>(p)]) continue;
      const auto& pm = projections[v];
      for (int axis = 0; axis < 2; ++axis) {
        Eigen::RowVector4d row = kp.points(p, axis) * pm.row(2) - pm.row(axis);
        const double scale = row.head<3>().norm();
        row /= scale;
        a.row(rows) = row.head<3>();
        b(rows) = -row(3);
        ++rows;
      }
    }
    if (rows < 4) {
      throw Error(ErrorKind::kDegenerateGeometry,
                  "joint " + std::to_string(p) + " is visible in fewer than 2 views");
    }
    const auto sys = a.topRows(rows);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv(2) > 1e-9 * sv(0))) {
      throw Error(ErrorKind::kDegenerateGeometry,
                  "rank-deficient DLT system for joint " + std::to_string(p) +
                      " (coincident camera centers?)");
    }
    const Eigen::Vector3d x = svd.solve(b.head(rows));
    out.pose.joints.row(p) = x.transpose();

    double joint_sq = 0.0;
    int joint_n = 0;
    for (std::size_t v = 0; v < views.size(); ++v) {
      const Keypoints2D& kp = *views[v].keypoints;
      if (!kp.visible[static_cast<std::size_t>(p)]) continue;
      const Eigen::Vector3d h = projections[v] * x.homogeneous();
      const Eigen::Vector2d uv = h.head<2>() / h.z();
      joint_sq += (uv - kp.points.row(p).transpose()).squaredNorm();
      ++joint_n;
    }
    out.joint_reprojection_px[static_cast<std::size_t>(p)] = std::sqrt(joint_sq / joint_n);
    sq_sum += joint_sq;
    sq_count += joint_n;
  }
  out.rms_reprojection_px = std::sqrt(sq_sum / sq_count);
  return out;
}

double mean_joint_distance(const PointsMatrix3& a, const PointsMatrix3& b) {
  if (a.rows() != b.rows() || a.rows() == 0) {
    throw Error(ErrorKind::kShapeMismatch, "joint counts differ or are empty");
  }
  return (a - b).rowwise().norm().mean();
}

Alignment procrustes_align(const Pose3D& pred, const Pose3D& gt, bool with_scale) {
  if (pred.num_joints() != gt.num_joints() || gt.num_joints() == 0) {
    throw Error(ErrorKind::kShapeMismatch, "pred and gt joint counts differ");
  }
  const Eigen::RowVector3d mu_pred = pred.joints.colwise().mean();
  const Eigen::RowVector3d mu_gt = gt.joints.colwise().mean();
  const PointsMatrix3 x = pred.joints.rowwise() - mu_pred;
  const PointsMatrix3 y = gt.joints.rowwise() - mu_gt;
  const double n = static_cast<double>(gt.num_joints());
  const double var_gt = y.squaredNorm() / n;
  if (!(var_gt > 1e-18)) {
    throw Error(ErrorKind::kDegeneratePose, "ground-truth joints are coincident");
  }
  const double var_pred = x.squaredNorm() / n;

  Alignment out;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  double s = 1.0;
  if (var_pred > 1e-18) {
    const Eigen::Matrix3d cov = y.transpose() * x / n;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2) = -1.0;
    r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    if (with_scale) s = svd.singularValues().dot(d) / var_pred;
  } else if (with_scale) {
    s = 0.0;
  }
  out.rotation = Rotation3::nearest(r);
  out.scale = s;
  out.translation = mu_gt.transpose() - s * (out.rotation.matrix() * mu_pred.transpose());
  out.aligned.frame = gt.frame;
  out.aligned.joints =
      ((s * (pred.joints * out.rotation.matrix().transpose())).rowwise() +
       out.translation.transpose());
  out.residual_mm = mean_joint_distance(out.aligned.joints, gt.joints);
  return out;
}

}  // namespace geomrep
