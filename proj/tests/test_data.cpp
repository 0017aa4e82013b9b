#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>

#include "geomrep/synthdata.hpp"
#include "geomrep/tensor_io.hpp"

using namespace geomrep;
namespace fs = std::filesystem;

namespace {

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

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("geomrep_test_" + name);
  fs::remove_all(p);
  return p;
}

CorpusConfig small_corpus(int n = 60, int virtual_pairs = 0) {
  CorpusConfig c;
  c.seed = 21;
  c.n_pairs = n;
  c.n_virtual_pairs = virtual_pairs;
  c.config_hash = "test";
  return c;
}

std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + '\0' + read_file(f);
  return all;
}

}  // namespace

// --- kinematic tree and skeleton maps ---------------------------------------

TEST_CASE("default body tree is a valid 16-joint tree with 15 limbs") {
  const KinematicTree t = default_body_tree();
  CHECK(t.num_joints() == 16);
  CHECK(t.num_limbs() == 15);
  CHECK_NOTHROW(t.validate());
  const auto order = t.topological_order();
  std::vector<int> pos(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) pos[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  for (int j = 0; j < t.num_joints(); ++j) CHECK(pos[static_cast<std::size_t>(t.parent[static_cast<std::size_t>(j)])] <= pos[static_cast<std::size_t>(j)]);
}

TEST_CASE("tree validation rejects cycles and missing limbs") {
  KinematicTree t = default_body_tree();
  t.parent[0] = 3;
  CHECK(kind_of([&] { t.validate(); }) == ErrorKind::kConfig);
  t = default_body_tree();
  t.limb_order.pop_back();
  CHECK(kind_of([&] { t.validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("forward kinematics preserves bone lengths") {
  PoseSampler s = default_pose_sampler(4);
  for (int i = 0; i < 50; ++i) {
    const Pose3D p = sample_pose(s);
    for (const auto& [child, parent] : s.tree.limb_order) {
      const double len = (p.joints.row(child) - p.joints.row(parent)).norm();
      CHECK(len == doctest::Approx(s.tree.bone_lengths_mm[static_cast<std::size_t>(child)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("forward kinematics at zero angles is the rest pose") {
  const KinematicTree tree = default_body_tree();
  const auto rest = default_rest_directions();
  const std::vector<Eigen::Vector3d> zero(static_cast<std::size_t>(tree.num_joints()), Eigen::Vector3d::Zero());
  const Pose3D p = forward_kinematics(tree, rest, zero, 950.0);
  CHECK(p.joints.row(tree.root()).isApprox(Eigen::RowVector3d(0, 0, 950.0)));
  for (const auto& [child, parent] : tree.limb_order) {
    const Eigen::Vector3d d = (p.joints.row(child) - p.joints.row(parent)).transpose();
    CHECK((d.normalized() - rest[static_cast<std::size_t>(child)]).norm() < 1e-12);
  }
}

TEST_CASE("sampled joint angles respect their limits") {
  PoseSampler s = default_pose_sampler(6);
  for (int i = 0; i < 100; ++i) {
    const SampledPose sp = sample_pose_with_angles(s);
    for (std::size_t j = 0; j < sp.angles.size(); ++j) {
      for (int a = 0; a < 3; ++a) {
        CHECK(sp.angles[j][a] >= s.joint_angle_limits[j].min[a] - 1e-12);
        CHECK(sp.angles[j][a] <= s.joint_angle_limits[j].max[a] + 1e-12);
      }
    }
  }
}

TEST_CASE("rasterization draws each limb in its own channel") {
  const KinematicTree tree = default_body_tree();
  PointsMatrix2 pts(16, 2);
  for (int j = 0; j < 16; ++j) pts.row(j) << 128.0, 128.0;
  const auto [child, parent] = tree.limb_order[3];
  pts.row(parent) << 40.0, 128.0;
  pts.row(child) << 200.0, 128.0;
  RasterParams rp;
  const SkeletonMap m = rasterize_skeleton(Keypoints2D::all_visible(pts), tree, rp);
  CHECK(m.channels == 15);
  CHECK(m.height == 64);
  // Horizontal stroke of limb 3 at row 32 from x=10 to x=50.
  CHECK(m.at(3, 32, 30) == 1.0f);
  CHECK(m.at(3, 32, 5) == 0.0f);
  CHECK(m.at(3, 20, 30) == 0.0f);
  CHECK(std::all_of(m.data.begin(), m.data.end(), [](float v) { return v == 0.0f || v == 1.0f; }));
}

TEST_CASE("invisible endpoints leave the limb empty") {
  const KinematicTree tree = default_body_tree();
  PointsMatrix2 pts(16, 2);
  for (int j = 0; j < 16; ++j) pts.row(j) << 60.0 + 8.0 * j, 50.0 + 9.0 * j;
  Keypoints2D kp = Keypoints2D::all_visible(pts);
  const auto [child, parent] = tree.limb_order[5];
  kp.visible[static_cast<std::size_t>(child)] = 0;
  const SkeletonMap m = rasterize_skeleton(kp, tree, {});
  double sum = 0.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) sum += m.at(5, y, x);
  CHECK(sum == 0.0);
}

TEST_CASE("skeleton IoU fixtures") {
  SkeletonMap a(1, 2, 2), b(1, 2, 2);
  CHECK(skeleton_iou(a, b) == 1.0);
  a.data = {1, 1, 0, 0};
  b.data = {1, 0, 1, 0};
  CHECK(skeleton_iou(a, b) == doctest::Approx(1.0 / 3.0));
  b.data = {0.5f, 0.49f, 0, 0};
  CHECK(skeleton_iou(a, b) == doctest::Approx(0.5));
  CHECK(skeleton_iou(a, a) == 1.0);
}

TEST_CASE("heatmap decoding finds the peak with a quarter-pixel shift") {
  Heatmaps h(2, 8, 8);
  h.at(0, 3, 5) = 1.0f;
  h.at(0, 3, 6) = 0.5f;
  h.at(0, 4, 5) = 0.2f;
  h.at(0, 2, 5) = 0.1f;
  const Keypoints2D kp = decode_heatmaps(h);
  CHECK(kp.points(0, 0) == doctest::Approx(5.25));
  CHECK(kp.points(0, 1) == doctest::Approx(3.25));
  CHECK(kp.visible[0] == 1);
  CHECK(kp.visible[1] == 0);
}

// --- GART container ----------------------------------------------------------

TEST_CASE("GART round-trips every dtype bit-exactly") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> d(31);
  for (auto& v : d) v = n(rng);
  d[3] = std::numeric_limits<double>::infinity();
  d[4] = -0.0;
  std::vector<float> f(d.begin(), d.end());
  std::vector<std::uint8_t> bits(19);
  for (auto& b : bits) b = rng() & 1u;
  for (const auto& t : {GartTensor::from_f64({31}, d), GartTensor::from_f32({31}, f),
                        GartTensor::from_bits({19}, bits)}) {
    const std::string bytes = encode_gart(t);
    const GartTensor back = decode_gart(bytes, "mem");
    CHECK(back.dtype == t.dtype);
    CHECK(back.dims == t.dims);
    CHECK(back.payload == t.payload);
    CHECK(encode_gart(back) == bytes);
  }
  const auto back = decode_gart(encode_gart(GartTensor::from_f64({31}, d)), "m").to_f64();
  CHECK(std::memcmp(back.data(), d.data(), d.size() * sizeof(double)) == 0);
  CHECK(decode_gart(encode_gart(GartTensor::from_bits({19}, bits)), "m").to_bits() == bits);
}

TEST_CASE("GART header layout") {
  const std::vector<float> v{1.0f, 2.0f};
  const std::string bytes = encode_gart(GartTensor::from_f32({1, 2}, v));
  REQUIRE(bytes.size() == 4 + 1 + 1 + 4 + 8 + 8);
  CHECK(bytes.substr(0, 4) == "GART");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(static_cast<unsigned char>(bytes[6]) == 2);
  CHECK(payload_bytes(DType::kBits, 9) == 2);
  CHECK(payload_bytes(DType::kF64, 3) == 24);
}

TEST_CASE("corrupted GART files are rejected") {
  const std::string good = encode_gart(GartTensor::from_f32({3}, std::vector<float>{1, 2, 3}));
  CHECK(kind_of([&] { decode_gart("GARX" + good.substr(4), "x"); }) == ErrorKind::kBadMagic);
  CHECK(kind_of([&] { decode_gart(good.substr(0, good.size() - 2), "x"); }) == ErrorKind::kIo);
  CHECK(kind_of([&] { decode_gart(good + "x", "x"); }) == ErrorKind::kIo);
  CHECK(kind_of([&] { decode_gart(good.substr(0, 3), "x"); }) == ErrorKind::kIo);
  std::string bad_dtype = good;
  bad_dtype[5] = 9;
  CHECK(kind_of([&] { decode_gart(bad_dtype, "x"); }) == ErrorKind::kIo);
  std::string bad_version = good;
  bad_version[4] = 7;
  CHECK(kind_of([&] { decode_gart(bad_version, "x"); }) == ErrorKind::kIo);
  CHECK(kind_of([&] { read_gart(scratch("missing") / "nope.gart"); }) == ErrorKind::kIo);
}

// --- synthetic corpus ---------------------------------------------------------

TEST_CASE("corpus generation is a pure function of its config") {
  const Dataset a = generate_corpus(small_corpus(40, 10));
  const Dataset b = generate_corpus(small_corpus(40, 10));
  REQUIRE(a.pairs.size() == 50);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].source == b.pairs[i].source);
    CHECK(a.pairs[i].rot_ij.matrix() == b.pairs[i].rot_ij.matrix());
  }
  CorpusConfig other = small_corpus(40, 10);
  other.seed = 22;
  const Dataset c = generate_corpus(other);
  bool differs = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) differs = differs || !(a.pairs[i].source == c.pairs[i].source);
  CHECK(differs);
}

TEST_CASE("pair rotations are consistent with the cameras") {
  const Dataset d = generate_corpus(small_corpus(40, 10));
  const auto& cams = d.manifest.cameras;
  for (const auto& p : d.pairs) {
    CHECK((p.rot_ij.matrix() * p.rot_ji.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    if (!p.meta.is_virtual) {
      CHECK(p.meta.cam_i != p.meta.cam_j);
      const Eigen::Matrix3d expect = rotation_between(cams[static_cast<std::size_t>(p.meta.cam_i)],
                                                      cams[static_cast<std::size_t>(p.meta.cam_j)]).matrix();
      CHECK((p.rot_ij.matrix() - expect).cwiseAbs().maxCoeff() < 1e-12);
    } else {
      CHECK(p.meta.cam_i == -1);
      CHECK(!p.label.has_value());
    }
  }
}

TEST_CASE("labels are root-relative poses in the source camera frame") {
  const Dataset d = generate_corpus(small_corpus(20));
  const int root = d.manifest.tree.root();
  for (const auto& p : d.pairs) {
    REQUIRE(p.label.has_value());
    CHECK(p.label->row(root).norm() == 0.0);
    // Rotating the label into the target camera keeps bone lengths.
    const PointsMatrix3 in_j = *p.label * p.rot_ij.matrix().transpose();
    for (const auto& [c, par] : d.manifest.tree.limb_order) {
      CHECK((in_j.row(c) - in_j.row(par)).norm() == doctest::Approx((p.label->row(c) - p.label->row(par)).norm()));
    }
  }
}

TEST_CASE("training cameras restrict only training subjects") {
  CorpusConfig c = small_corpus(200);
  c.train_cameras = {0, 1, 2};
  const Dataset d = generate_corpus(c);
  bool test_uses_held_out = false;
  for (const auto& p : d.pairs) {
    if (d.is_train(p.meta)) {
      CHECK(p.meta.cam_i != 3);
      CHECK(p.meta.cam_j != 3);
    } else {
      test_uses_held_out = test_uses_held_out || p.meta.cam_i == 3;
    }
  }
  CHECK(test_uses_held_out);
}

TEST_CASE("default corpus uses the four-camera rig") {
  const Dataset d = generate_corpus(small_corpus(8));
  CHECK(d.manifest.n_viewpoints == 4);
  CHECK(d.manifest.cameras.size() == 4);
  CHECK(d.manifest.map_channels == 15);
  CHECK(d.manifest.map_height == 64);
}

TEST_CASE("virtual augmentation renders from torus cameras") {
  const KinematicTree tree = default_body_tree();
  PoseSampler s = default_pose_sampler(3);
  const Pose3D pose = sample_pose(s);
  const auto rig = build_rig(default_rig());
  std::vector<CalibratedView> views;
  for (const auto& c : rig) views.push_back({project(pose, c), c});
  TorusSampler torus;
  torus.rng.seed(4);
  const auto pairs = augment_virtual_pairs(views, torus, 5, tree, {});
  REQUIRE(pairs.size() == 5);
  for (const auto& p : pairs) {
    CHECK(p.meta.is_virtual);
    CHECK(Rotation3::is_valid(p.rot_ij.matrix()));
  }
  const std::vector<CalibratedView> single{views[0]};
  CHECK(kind_of([&] { augment_virtual_pairs(single, torus, 5, tree, {}); }) == ErrorKind::kDegenerateGeometry);
  Camera twin = rig[0];
  twin.focal *= 1.2;
  const std::vector<CalibratedView> coincident{views[0], {project(pose, twin), twin}};
  std::string why;
  CHECK(augment_virtual_pairs(coincident, torus, 5, tree, {}, &why).empty());
  CHECK(!why.empty());
}

TEST_CASE("dataset write and read round-trip, and writes are byte-identical") {
  const Dataset d = generate_corpus(small_corpus(30, 6));
  const fs::path a = scratch("ds_a"), b = scratch("ds_b");
  write_dataset(d, a);
  write_dataset(generate_corpus(small_corpus(30, 6)), b);
  CHECK(tree_bytes(a) == tree_bytes(b));
  ReadOptions ro;
  ro.load_labels = true;
  const Dataset r = read_dataset(a, ro);
  REQUIRE(r.pairs.size() == d.pairs.size());
  for (std::size_t i = 0; i < d.pairs.size(); ++i) {
    CHECK(r.pairs[i].source == d.pairs[i].source);
    CHECK(r.pairs[i].target == d.pairs[i].target);
    CHECK(r.pairs[i].rot_ij.matrix() == d.pairs[i].rot_ij.matrix());
    CHECK(r.pairs[i].meta.id == d.pairs[i].meta.id);
    CHECK(r.pairs[i].label.has_value() == d.pairs[i].label.has_value());
    if (d.pairs[i].label) CHECK(*r.pairs[i].label == *d.pairs[i].label);
  }
  CHECK(r.manifest.config_hash == "test");
}

TEST_CASE("reading without labels never opens pose files") {
  const fs::path dir = scratch("ds_audit");
  write_dataset(generate_corpus(small_corpus(12)), dir);
  IoAudit audit;
  ReadOptions ro;
  ro.audit = &audit;
  const Dataset d = read_dataset(dir, ro);
  CHECK(!audit.opened.empty());
  CHECK(!audit.touched("poses"));
  for (const auto& p : d.pairs) CHECK(!p.label.has_value());
  IoAudit with;
  ro.audit = &with;
  ro.load_labels = true;
  read_dataset(dir, ro);
  CHECK(with.touched("poses"));
}

TEST_CASE("corrupted or missing dataset files are rejected") {
  const fs::path dir = scratch("ds_corrupt");
  write_dataset(generate_corpus(small_corpus(6)), dir);
  CHECK(kind_of([&] { read_dataset(scratch("ds_none")); }) == ErrorKind::kMissingInput);
  const fs::path victim = dir / "pairs" / (pair_file_stem(2) + "_src.gart");
  std::string bytes = read_file(victim);
  write_file(victim, bytes.substr(0, bytes.size() - 3));
  const ErrorKind k = kind_of([&] { read_dataset(dir); });
  CHECK((k == ErrorKind::kIo || k == ErrorKind::kShapeMismatch));
  write_file(victim, bytes);
  fs::remove(victim);
  const ErrorKind k2 = kind_of([&] { read_dataset(dir); });
  CHECK((k2 == ErrorKind::kIo || k2 == ErrorKind::kMissingInput));
}

TEST_CASE("derived seeds differ per stream") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(5, s));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(5, 7) == derive_seed(5, 7));
}
