#include <doctest.h>

#include <Eigen/Geometry>

#include "geomrep/synthdata.hpp"

using namespace geomrep;

namespace {

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  std::uniform_real_distribution<double> a(-kPi, kPi);
  return Rotation3::about_axis(axis.normalized(), a(rng)).matrix();
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

Pose3D random_world_pose(std::mt19937_64& rng, int k = kDefaultJoints) {
  std::uniform_real_distribution<double> xy(-400.0, 400.0), z(100.0, 1700.0);
  Pose3D p;
  p.joints.resize(k, 3);
  for (int i = 0; i < k; ++i) p.joints.row(i) << xy(rng), xy(rng), z(rng);
  return p;
}

double rms(const PointsMatrix3& a, const PointsMatrix3& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.rows()));
}

}  // namespace

TEST_CASE("rotation construction rejects non-rotations") {
  CHECK_NOTHROW(Rotation3::from_matrix(Eigen::Matrix3d::Identity()));
  Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
  reflect(2, 2) = -1.0;
  CHECK(kind_of([&] { Rotation3::from_matrix(reflect); }) == ErrorKind::kInvalidRotation);
  CHECK(kind_of([&] { Rotation3::from_matrix(2.0 * Eigen::Matrix3d::Identity()); }) == ErrorKind::kInvalidRotation);
}

TEST_CASE("nearest rotation projects back onto SO(3)") {
  std::mt19937_64 rng(1);
  const Eigen::Matrix3d r = random_rotation(rng);
  Eigen::Matrix3d noisy = r;
  noisy(0, 1) += 1e-3;
  const Rotation3 q = Rotation3::nearest(noisy);
  CHECK(Rotation3::is_valid(q.matrix()));
  CHECK((q.matrix() - r).norm() < 2e-3);
}

TEST_CASE("rotation_between composes and inverts") {
  std::mt19937_64 rng(2);
  TorusSampler torus;
  torus.rng.seed(3);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Vector3d look(0, 0, 900);
    const Camera a = sample_virtual_camera(torus, look);
    const Camera b = sample_virtual_camera(torus, look);
    const Camera c = sample_virtual_camera(torus, look);
    const Eigen::Matrix3d lhs = rotation_between(b, c).matrix() * rotation_between(a, b).matrix();
    CHECK((lhs - rotation_between(a, c).matrix()).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((rotation_between(a, a).matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("rotation_between maps camera-i coordinates to camera-j coordinates") {
  std::mt19937_64 rng(4);
  TorusSampler torus;
  torus.rng.seed(5);
  const Camera a = sample_virtual_camera(torus, {0, 0, 900});
  const Camera b = sample_virtual_camera(torus, {0, 0, 900});
  const Eigen::Vector3d X(120.0, -40.0, 1100.0);
  const Eigen::Vector3d xa = a.rotation * X + a.translation;
  const Eigen::Vector3d xb = b.rotation * X + b.translation;
  // Directions (translation-free) transform by R_ab.
  const Eigen::Vector3d da = a.rotation * Eigen::Vector3d(1, 2, 3);
  const Eigen::Vector3d db = b.rotation * Eigen::Vector3d(1, 2, 3);
  CHECK((rotation_between(a, b) * da - db).norm() < 1e-9);
  CHECK(std::isfinite(xa.norm() + xb.norm()));
}

TEST_CASE("projection hand fixture") {
  Camera cam;
  cam.rotation = Rotation3::identity();
  cam.translation = Eigen::Vector3d(0, 0, 0);
  cam.focal = {1000.0, 800.0};
  cam.principal_point = {500.0, 400.0};
  Pose3D p;
  p.joints.resize(2, 3);
  p.joints << 100.0, -50.0, 2000.0, 0.0, 0.0, 1000.0;
  const Keypoints2D kp = project(p, cam);
  CHECK(kp.points(0, 0) == doctest::Approx(550.0).epsilon(1e-12));
  CHECK(kp.points(0, 1) == doctest::Approx(380.0).epsilon(1e-12));
  CHECK(kp.points(1, 0) == doctest::Approx(500.0));
  CHECK(kp.points(1, 1) == doctest::Approx(400.0));
}

TEST_CASE("projection rejects joints behind the camera and names them") {
  Camera cam;
  Pose3D p;
  p.joints.resize(3, 3);
  p.joints << 0, 0, 1000, 0, 0, -5, 0, 0, 0;
  try {
    project(p, cam);
    FAIL("expected kBehindCamera");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kBehindCamera);
    const std::string msg = e.what();
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("look-at and torus cameras aim at the target") {
  const Eigen::Vector3d target(10.0, -20.0, 900.0);
  for (double az : {0.0, 1.0, 2.5, 4.0, 6.0}) {
    for (double el : {-0.2, 0.0, 0.25}) {
      const Camera c = camera_on_torus(target, 5000.0, az, el, {1150.0, 1150.0}, {1000.0, 1000.0});
      CHECK((c.center() - target).norm() == doctest::Approx(5000.0).epsilon(1e-12));
      CHECK(std::asin((c.center() - target).z() / 5000.0) == doctest::Approx(el).epsilon(1e-9));
      Pose3D p;
      p.joints = target.transpose();
      const Keypoints2D kp = project(p, c);
      CHECK(std::abs(kp.points(0, 0) - c.principal_point.x()) < 1e-6);
      CHECK(std::abs(kp.points(0, 1) - c.principal_point.y()) < 1e-6);
      // World up appears toward smaller image rows.
      Pose3D up;
      up.joints = (target + Eigen::Vector3d(0, 0, 100)).transpose();
      CHECK(project(up, c).points(0, 1) < c.principal_point.y());
    }
  }
}

TEST_CASE("torus sampler respects its ranges") {
  TorusSampler t;
  t.azimuth = {0.5, 1.0};
  t.elevation = {-0.1, 0.1};
  t.rng.seed(8);
  const Eigen::Vector3d look(0, 0, 900);
  for (int i = 0; i < 200; ++i) {
    const Camera c = sample_virtual_camera(t, look);
    const Eigen::Vector3d d = c.center() - look;
    CHECK(d.norm() == doctest::Approx(5000.0));
    const double el = std::asin(d.z() / d.norm());
    const double az = std::atan2(d.y(), d.x());
    CHECK(el >= -0.1 - 1e-12);
    CHECK(el <= 0.1 + 1e-12);
    CHECK(az >= 0.5 - 1e-12);
    CHECK(az <= 1.0 + 1e-12);
  }
  TorusSampler bad;
  bad.azimuth = {1.0, 1.0};
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("triangulation recovers projected poses") {
  std::mt19937_64 rng(9);
  const auto rig = build_rig(default_rig());
  for (int t = 0; t < 20; ++t) {
    const Pose3D pose = random_world_pose(rng);
    std::vector<Keypoints2D> kps;
    for (const auto& c : rig) kps.push_back(project(pose, c));
    std::vector<TriangulationView> views;
    for (std::size_t v = 0; v < rig.size(); ++v) views.push_back({&kps[v], &rig[v]});
    const Triangulation tr = triangulate(views);
    CHECK((tr.pose.joints - pose.joints).rowwise().norm().maxCoeff() <= 1e-6);
    CHECK(tr.rms_reprojection_px < 1e-6);
  }
}

TEST_CASE("triangulation uses only views where the joint is visible") {
  std::mt19937_64 rng(10);
  const auto rig = build_rig(default_rig());
  const Pose3D pose = random_world_pose(rng);
  std::vector<Keypoints2D> kps;
  for (const auto& c : rig) kps.push_back(project(pose, c));
  kps[0].visible[3] = 0;
  kps[0].points.row(3) << 1e6, -1e6;
  kps[1].visible[3] = 0;
  std::vector<TriangulationView> views;
  for (std::size_t v = 0; v < rig.size(); ++v) views.push_back({&kps[v], &rig[v]});
  const Triangulation tr = triangulate(views);
  CHECK((tr.pose.joints.row(3) - pose.joints.row(3)).norm() <= 1e-6);
  kps[2].visible[3] = 0;
  CHECK(kind_of([&] { triangulate(views); }) == ErrorKind::kDegenerateGeometry);
}

TEST_CASE("triangulation from coincident centers is degenerate") {
  std::mt19937_64 rng(11);
  const auto rig = build_rig(default_rig());
  const Pose3D pose = random_world_pose(rng);
  Camera twin = rig[0];
  twin.focal *= 1.3;
  const Keypoints2D a = project(pose, rig[0]);
  const Keypoints2D b = project(pose, twin);
  const std::vector<TriangulationView> views{{&a, &rig[0]}, {&b, &twin}};
  CHECK(kind_of([&] { triangulate(views); }) == ErrorKind::kDegenerateGeometry);
}

TEST_CASE("procrustes recovers similarity transforms") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> sc(0.3, 3.0), tr(-2000, 2000);
  for (int t = 0; t < 100; ++t) {
    const Pose3D gt = random_world_pose(rng);
    const Eigen::Matrix3d R = random_rotation(rng);
    const double s = sc(rng);
    const Eigen::RowVector3d off(tr(rng), tr(rng), tr(rng));
    Pose3D pred = gt;
    pred.joints = (s * gt.joints * R.transpose()).rowwise() + off;
    const Alignment a = procrustes_align(pred, gt, true);
    CHECK(a.residual_mm <= 1e-9);
    CHECK(a.scale == doctest::Approx(1.0 / s).epsilon(1e-10));
    CHECK((a.rotation.matrix() - R.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("procrustes never returns a reflection") {
  std::mt19937_64 rng(13);
  const Pose3D gt = random_world_pose(rng);
  Pose3D mirrored = gt;
  mirrored.joints.col(0) *= -1.0;
  const Alignment a = procrustes_align(mirrored, gt, true);
  CHECK(a.rotation.matrix().determinant() == doctest::Approx(1.0));
  CHECK(a.residual_mm > 1.0);
  const Alignment rigid = procrustes_align(mirrored, gt, false);
  CHECK(rigid.scale == 1.0);
  CHECK(rms(rigid.aligned.joints, gt.joints) >= rms(a.aligned.joints, gt.joints) - 1e-9);
}

TEST_CASE("procrustes never increases the rms error") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 50.0);
  for (int t = 0; t < 100; ++t) {
    const Pose3D gt = random_world_pose(rng);
    Pose3D pred = gt;
    for (Eigen::Index i = 0; i < pred.joints.size(); ++i) pred.joints.data()[i] += n(rng);
    const Alignment a = procrustes_align(pred, gt, true);
    CHECK(rms(a.aligned.joints, gt.joints) <= rms(pred.joints, gt.joints) + 1e-9);
    CHECK(a.residual_mm == doctest::Approx(mean_joint_distance(a.aligned.joints, gt.joints)));
  }
}

TEST_CASE("procrustes rejects mismatched shapes and collapsed poses") {
  Pose3D a, b;
  a.joints = PointsMatrix3::Zero(4, 3);
  b.joints = PointsMatrix3::Zero(5, 3);
  CHECK(kind_of([&] { procrustes_align(a, b, true); }) == ErrorKind::kShapeMismatch);
  b.joints = PointsMatrix3::Random(4, 3);
  CHECK(kind_of([&] { procrustes_align(b, a, true); }) == ErrorKind::kDegeneratePose);
}
