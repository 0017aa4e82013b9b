#include "geomrep/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "geomrep/json_io.hpp"
#include "geomrep/tensor_io.hpp"

namespace geomrep {

namespace fs = std::filesystem;

Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& a) {
  const double cx = std::cos(a.x()), sx = std::sin(a.x());
  const double cy = std::cos(a.y()), sy = std::sin(a.y());
  const double cz = std::cos(a.z()), sz = std::sin(a.z());
  Eigen::Matrix3d rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rx * ry * rz;
}

std::vector<Eigen::Vector3d> default_rest_directions() {
  const Eigen::Vector3d left = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  return {Eigen::Vector3d::Zero(), -left, -up, -up, left, -up, -up, up,
          up,                      up,    left, -up, -up, -left, -up, -up};
}

namespace {

JointLimits fixed() { return {}; }

JointLimits swing(double x_lo, double x_hi, double y_lo, double y_hi) {
  return {Eigen::Vector3d(x_lo, y_lo, 0.0), Eigen::Vector3d(x_hi, y_hi, 0.0)};
}

std::vector<JointLimits> neutral_limits() {
  std::vector<JointLimits> l(16, fixed());
  l[0] = {Eigen::Vector3d(0, 0, -kPi), Eigen::Vector3d(0, 0, kPi)};
  l[2] = swing(-0.4, 1.2, -0.05, 0.4);   // right thigh
  l[3] = swing(-1.6, 0.0, -0.05, 0.05);  // right shin
  l[5] = swing(-0.4, 1.2, -0.4, 0.05);   // left thigh
  l[6] = swing(-1.6, 0.0, -0.05, 0.05);  // left shin
  l[7] = swing(-0.5, 0.2, -0.3, 0.3);    // spine
  l[8] = swing(-0.3, 0.3, -0.2, 0.2);
  l[9] = swing(-0.4, 0.3, -0.3, 0.3);
  l[11] = swing(-0.8, 1.8, -1.4, 0.2);  // left upper arm
  l[12] = swing(0.0, 2.2, -0.3, 0.3);
  l[14] = swing(-0.8, 1.8, -0.2, 1.4);  // right upper arm
  l[15] = swing(0.0, 2.2, -0.3, 0.3);
  return l;
}

}  // namespace

std::vector<PoseFamily> default_pose_families() {
  PoseFamily neutral{"neutral", neutral_limits(), {880.0, 960.0}};

  PoseFamily reach{"reach", neutral_limits(), {900.0, 960.0}};
  reach.limits[11] = swing(0.6, 2.9, -1.0, 0.2);
  reach.limits[14] = swing(0.6, 2.9, -0.2, 1.0);
  reach.limits[12] = swing(0.0, 1.0, -0.3, 0.3);
  reach.limits[15] = swing(0.0, 1.0, -0.3, 0.3);

  PoseFamily crouch{"crouch", neutral_limits(), {450.0, 700.0}};
  crouch.limits[2] = swing(0.8, 1.6, -0.05, 0.4);
  crouch.limits[5] = swing(0.8, 1.6, -0.4, 0.05);
  crouch.limits[3] = swing(-2.2, -1.0, -0.05, 0.05);
  crouch.limits[6] = swing(-2.2, -1.0, -0.05, 0.05);
  crouch.limits[7] = swing(-0.9, -0.2, -0.3, 0.3);
  return {neutral, reach, crouch};
}

void PoseSampler::validate() const {
  tree.validate();
  if (rest_directions.size() != tree.parent.size() ||
      joint_angle_limits.size() != tree.parent.size()) {
    throw Error(ErrorKind::kConfig, "pose sampler needs rest directions and limits per joint");
  }
  for (const auto& l : joint_angle_limits) {
    if (!l.min.allFinite() || !l.max.allFinite() || (l.min.array() > l.max.array()).any()) {
      throw Error(ErrorKind::kConfig, "joint angle limits must be finite with min <= max");
    }
  }
  if (!(root_height_range_mm.lo <= root_height_range_mm.hi)) {
    throw Error(ErrorKind::kConfig, "root height range is empty");
  }
}

PoseSampler default_pose_sampler(std::uint64_t seed) {
  PoseSampler s;
  s.tree = default_body_tree();
  s.rest_directions = default_rest_directions();
  const auto fam = default_pose_families().front();
  s.joint_angle_limits = fam.limits;
  s.root_height_range_mm = fam.root_height_mm;
  s.rng.seed(seed);
  return s;
}

Pose3D forward_kinematics(const KinematicTree& tree,
                          const std::vector<Eigen::Vector3d>& rest_directions,
                          const std::vector<Eigen::Vector3d>& angles, double root_height_mm) {
  const int n = tree.num_joints();
  std::vector<Eigen::Matrix3d> frames(static_cast<std::size_t>(n));
  Pose3D pose;
  pose.frame = Frame::kWorld;
  pose.joints.resize(n, 3);
  for (int j : tree.topological_order()) {
    const auto ju = static_cast<std::size_t>(j);
    const int p = tree.parent[ju];
    if (p == j) {
      frames[ju] = euler_xyz(angles[ju]);
      pose.joints.row(j) << 0.0, 0.0, root_height_mm;
      continue;
    }
    frames[ju] = frames[static_cast<std::size_t>(p)] * euler_xyz(angles[ju]);
    pose.joints.row(j) =
        pose.joints.row(p) + (frames[ju] * (tree.bone_lengths_mm[ju] * rest_directions[ju])).transpose();
  }
  return pose;
}

SampledPose sample_pose_with_angles(PoseSampler& sampler) {
  sampler.validate();
  auto draw = [&](double lo, double hi) {
    if (lo == hi) return lo;
    std::uniform_real_distribution<double> u(lo, hi);
    return u(sampler.rng);
  };
  SampledPose out;
  out.angles.resize(sampler.tree.parent.size());
  for (std::size_t j = 0; j < out.angles.size(); ++j) {
    const auto& l = sampler.joint_angle_limits[j];
    for (int a = 0; a < 3; ++a) out.angles[j](a) = draw(l.min(a), l.max(a));
  }
  const double h = draw(sampler.root_height_range_mm.lo, sampler.root_height_range_mm.hi);
  out.pose = forward_kinematics(sampler.tree, sampler.rest_directions, out.angles, h);
  return out;
}

Pose3D sample_pose(PoseSampler& sampler) { return sample_pose_with_angles(sampler).pose; }

Keypoints2D crop_keypoints(const Keypoints2D& image_kp, const Pose3D& world_pose,
                           const Camera& cam, int root, const CropParams& crop) {
  const double depth = cam.to_camera(world_pose.joints.row(root).transpose()).z();
  if (!(depth > 0.0)) throw Error(ErrorKind::kBehindCamera, "root joint behind camera");
  const double side = cam.focal.x() * crop.extent_mm / depth;
  const Eigen::RowVector2d center = image_kp.points.row(root);
  Keypoints2D out = image_kp;
  const double s = crop.reference_size / side;
  out.points = ((image_kp.points.rowwise() - center) * s).array() + crop.reference_size / 2.0;
  return out;
}

namespace {

struct RenderedView {
  Keypoints2D keypoints;
  SkeletonMap map;
};

RenderedView render_view(const Keypoints2D& image_kp, const Pose3D& pose, const Camera& cam,
                         const KinematicTree& tree, const ViewParams& params) {
  RenderedView v;
  v.keypoints = crop_keypoints(image_kp, pose, cam, tree.root(), params.crop);
  RasterParams rp = params.raster;
  rp.reference_size = params.crop.reference_size;
  v.map = rasterize_skeleton(v.keypoints, tree, rp);
  return v;
}

}  // namespace

ViewPair make_view_pair(const Pose3D& pose, const Camera& cam_i, const Camera& cam_j,
                        const KinematicTree& tree, const ViewParams& params) {
  auto src = render_view(project(pose, cam_i), pose, cam_i, tree, params);
  auto tgt = render_view(project(pose, cam_j), pose, cam_j, tree, params);
  ViewPair out;
  out.source = std::move(src.map);
  out.target = std::move(tgt.map);
  out.source_keypoints = std::move(src.keypoints);
  out.target_keypoints = std::move(tgt.keypoints);
  out.rot_ij = rotation_between(cam_i, cam_j);
  out.rot_ji = rotation_between(cam_j, cam_i);
  return out;
}

std::vector<ViewPair> augment_virtual_pairs(const std::vector<CalibratedView>& views,
                                            TorusSampler& sampler, int count,
                                            const KinematicTree& tree, const ViewParams& params,
                                            std::string* skipped_reason) {
  std::vector<ViewPair> out;
  if (count <= 0) return out;
  if (views.size() < 2) {
    throw Error(ErrorKind::kDegenerateGeometry, "augmentation needs at least 2 calibrated views");
  }
  std::vector<TriangulationView> tv;
  for (const auto& v : views) tv.push_back({&v.keypoints, &v.camera});
  Pose3D skeleton;
  try {
    skeleton = triangulate(tv).pose;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateGeometry) throw;
    if (skipped_reason) *skipped_reason = e.what();
    return out;
  }
  const Eigen::Vector3d look_at = skeleton.joints.row(tree.root()).transpose();
  for (int k = 0; k < count; ++k) {
    const Camera a = sample_virtual_camera(sampler, look_at);
    const Camera b = sample_virtual_camera(sampler, look_at);
    out.push_back(make_view_pair(skeleton, a, b, tree, params));
    out.back().meta.is_virtual = true;
  }
  return out;
}

PackedMap PackedMap::pack(const SkeletonMap& m) {
  PackedMap p;
  p.channels = m.channels;
  p.height = m.height;
  p.width = m.width;
  p.bytes.assign((m.data.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (m.data[i] >= 0.5f) p.bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return p;
}

void PackedMap::unpack_into(float* dst) const {
  const std::size_t n = elements();
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>((bytes[i / 8] >> (i % 8)) & 1u);
}

SkeletonMap PackedMap::unpack() const {
  SkeletonMap m(channels, height, width, true);
  unpack_into(m.data.data());
  return m;
}

ViewPair Dataset::view_pair(std::size_t i) const {
  const StoredPair& s = pairs.at(i);
  ViewPair v;
  v.source = s.source.unpack();
  v.target = s.target.unpack();
  v.rot_ij = s.rot_ij;
  v.rot_ji = s.rot_ji;
  v.meta = s.meta;
  v.source_keypoints = s.source_keypoints;
  return v;
}

bool Dataset::is_train(const PairMeta& m) const {
  return std::find(manifest.train_subjects.begin(), manifest.train_subjects.end(), m.subject) !=
         manifest.train_subjects.end();
}

RigConfig default_rig() {
  RigConfig rig;
  rig.positions = {Eigen::Vector3d(3200.0, 2600.0, 1500.0), Eigen::Vector3d(-3100.0, 2700.0, 1350.0),
                   Eigen::Vector3d(-3300.0, -2500.0, 1650.0),
                   Eigen::Vector3d(3000.0, -2800.0, 1250.0)};
  return rig;
}

std::vector<Camera> build_rig(const RigConfig& rig) {
  std::vector<Camera> cams;
  for (const auto& p : rig.positions) cams.push_back(look_at_camera(p, rig.target, rig.focal, rig.image_size));
  return cams;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(master ^ mix(stream));
}

namespace {

constexpr std::uint64_t kVirtualStream = 1ull << 40;

struct PoseDraw {
  Pose3D world;
  int subject;
  int family;
};

PoseDraw draw_pose(const CorpusConfig& cfg, const std::vector<PoseFamily>& families,
                   std::int64_t t, std::mt19937_64& rng) {
  PoseDraw d;
  d.subject = static_cast<int>(t % static_cast<std::int64_t>(cfg.subject_scales.size()));
  std::uniform_int_distribution<int> fam(0, static_cast<int>(families.size()) - 1);
  d.family = fam(rng);
  PoseSampler sampler;
  sampler.tree = default_body_tree();
  for (auto& b : sampler.tree.bone_lengths_mm) b *= cfg.subject_scales[static_cast<std::size_t>(d.subject)];
  sampler.rest_directions = default_rest_directions();
  sampler.joint_angle_limits = families[static_cast<std::size_t>(d.family)].limits;
  sampler.root_height_range_mm = families[static_cast<std::size_t>(d.family)].root_height_mm;
  sampler.rng.seed(rng());
  d.world = sample_pose(sampler);
  return d;
}

Keypoints2D noisy_projection(const Pose3D& pose, const Camera& cam, double sigma,
                             std::mt19937_64& rng) {
  Keypoints2D kp = project(pose, cam);
  if (sigma > 0.0) {
    std::normal_distribution<double> n(0.0, sigma);
    for (int p = 0; p < kp.size(); ++p) {
      kp.points(p, 0) += n(rng);
      kp.points(p, 1) += n(rng);
    }
  }
  return kp;
}

PointsMatrix3 camera_root_relative(const Pose3D& world, const Camera& cam, int root) {
  PointsMatrix3 out(world.num_joints(), 3);
  const Eigen::RowVector3d r = world.joints.row(root);
  for (int p = 0; p < world.num_joints(); ++p) {
    out.row(p) = (cam.rotation.matrix() * (world.joints.row(p) - r).transpose()).transpose();
  }
  return out;
}

}  // namespace

Dataset generate_corpus(const CorpusConfig& cfg) {
  if (cfg.n_pairs < 0 || cfg.n_virtual_pairs < 0) {
    throw Error(ErrorKind::kConfig, "pair counts must be non-negative");
  }
  if (cfg.subject_scales.empty()) throw Error(ErrorKind::kConfig, "need at least one subject");
  cfg.torus.validate();

  const KinematicTree tree = default_body_tree();
  const auto families = default_pose_families();
  const std::vector<Camera> cams = build_rig(cfg.rig);
  const int n_cams = static_cast<int>(cams.size());
  if (n_cams < 2) throw Error(ErrorKind::kConfig, "rig needs at least 2 cameras");

  std::vector<int> all_cams(static_cast<std::size_t>(n_cams));
  for (int c = 0; c < n_cams; ++c) all_cams[static_cast<std::size_t>(c)] = c;
  const std::vector<int> train_cams = cfg.train_cameras.empty() ? all_cams : cfg.train_cameras;
  if (train_cams.size() < 2) throw Error(ErrorKind::kConfig, "need at least 2 training cameras");
  for (int c : train_cams) {
    if (c < 0 || c >= n_cams) throw Error(ErrorKind::kConfig, "training camera index out of range");
  }

  Dataset ds;
  DatasetManifest& m = ds.manifest;
  m.tree = tree;
  m.map_channels = tree.num_limbs();
  m.map_height = cfg.view.raster.height;
  m.map_width = cfg.view.raster.width;
  m.view = cfg.view;
  m.cameras = cams;
  m.n_viewpoints = n_cams;
  m.subject_scales = cfg.subject_scales;
  m.test_subjects = cfg.test_subjects;
  for (int s = 0; s < static_cast<int>(cfg.subject_scales.size()); ++s) {
    if (std::find(cfg.test_subjects.begin(), cfg.test_subjects.end(), s) == cfg.test_subjects.end()) {
      m.train_subjects.push_back(s);
    }
  }
  m.train_cameras = train_cams;
  for (const auto& f : families) m.families.push_back(f.name);
  m.master_seed = cfg.seed;
  m.config_hash = cfg.config_hash;
  m.has_labels = cfg.with_labels;

  auto is_test = [&](int subject) {
    return std::find(cfg.test_subjects.begin(), cfg.test_subjects.end(), subject) !=
           cfg.test_subjects.end();
  };

  ds.pairs.reserve(static_cast<std::size_t>(cfg.n_pairs + cfg.n_virtual_pairs));
  std::vector<std::int64_t> train_pose_ids;
  for (std::int64_t t = 0; t < cfg.n_pairs; ++t) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    const PoseDraw d = draw_pose(cfg, families, t, rng);
    const std::vector<int>& pool = is_test(d.subject) ? all_cams : train_cams;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const int ci = pool[pick(rng)];
    int cj = ci;
    while (cj == ci) cj = pool[pick(rng)];

    const Camera& cam_i = cams[static_cast<std::size_t>(ci)];
    const Camera& cam_j = cams[static_cast<std::size_t>(cj)];
    const Keypoints2D kp_i = noisy_projection(d.world, cam_i, cfg.keypoint_noise_px, rng);
    const Keypoints2D kp_j = noisy_projection(d.world, cam_j, cfg.keypoint_noise_px, rng);
    const auto src = render_view(kp_i, d.world, cam_i, tree, cfg.view);
    const auto tgt = render_view(kp_j, d.world, cam_j, tree, cfg.view);

    StoredPair sp;
    sp.source = PackedMap::pack(src.map);
    sp.target = PackedMap::pack(tgt.map);
    sp.rot_ij = rotation_between(cam_i, cam_j);
    sp.rot_ji = rotation_between(cam_j, cam_i);
    sp.meta = PairMeta{t, d.subject, d.family, ci, cj, false, t};
    sp.source_keypoints = src.keypoints;
    if (cfg.with_labels) sp.label = camera_root_relative(d.world, cam_i, tree.root());
    ds.pairs.push_back(std::move(sp));
    if (!is_test(d.subject)) train_pose_ids.push_back(t);
  }

  if (cfg.n_virtual_pairs > 0 && train_pose_ids.empty()) {
    throw Error(ErrorKind::kConfig, "virtual augmentation needs training poses");
  }
  for (std::int64_t v = 0; v < cfg.n_virtual_pairs; ++v) {
    const std::int64_t t = train_pose_ids[static_cast<std::size_t>(v) % train_pose_ids.size()];
    std::mt19937_64 pose_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    const PoseDraw d = draw_pose(cfg, families, t, pose_rng);

    std::mt19937_64 rng(derive_seed(cfg.seed, kVirtualStream + static_cast<std::uint64_t>(v)));
    std::vector<CalibratedView> views;
    for (int c : train_cams) {
      const Camera& cam = cams[static_cast<std::size_t>(c)];
      views.push_back({noisy_projection(d.world, cam, cfg.keypoint_noise_px, rng), cam});
    }
    TorusSampler torus = cfg.torus;
    torus.rng.seed(rng());
    auto made = augment_virtual_pairs(views, torus, 1, tree, cfg.view);
    if (made.empty()) continue;
    ViewPair& vp = made.front();
    StoredPair sp;
    sp.source = PackedMap::pack(vp.source);
    sp.target = PackedMap::pack(vp.target);
    sp.rot_ij = vp.rot_ij;
    sp.rot_ji = vp.rot_ji;
    sp.meta = PairMeta{cfg.n_pairs + v, d.subject, d.family, -1, -1, true, t};
    sp.source_keypoints = vp.source_keypoints;
    ds.pairs.push_back(std::move(sp));
  }

  m.n_pairs = static_cast<std::int64_t>(ds.pairs.size());
  for (const auto& p : ds.pairs) m.index.push_back(p.meta);
  return ds;
}

bool IoAudit::touched(std::string_view fragment) const {
  return std::any_of(opened.begin(), opened.end(),
                     [&](const std::string& s) { return s.find(fragment) != std::string::npos; });
}

std::string pair_file_stem(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%07lld", static_cast<long long>(id));
  return buf;
}

namespace {

std::vector<std::uint32_t> dims_of(std::initializer_list<int> d) {
  std::vector<std::uint32_t> out;
  for (int v : d) out.push_back(static_cast<std::uint32_t>(v));
  return out;
}

Json meta_to_json(const PairMeta& m) {
  return Json{{"id", m.id},         {"subject", m.subject}, {"family", m.family},
              {"cam_i", m.cam_i},   {"cam_j", m.cam_j},     {"virtual", m.is_virtual},
              {"t", m.t}};
}

PairMeta meta_from_json(const Json& j) {
  PairMeta m;
  m.id = j.at("id").get<std::int64_t>();
  m.subject = j.at("subject").get<int>();
  m.family = j.at("family").get<int>();
  m.cam_i = j.at("cam_i").get<int>();
  m.cam_j = j.at("cam_j").get<int>();
  m.is_virtual = j.at("virtual").get<bool>();
  m.t = j.at("t").get<std::int64_t>();
  return m;
}

Json manifest_to_json(const DatasetManifest& m) {
  Json cams = Json::array();
  for (const auto& c : m.cameras) cams.push_back(to_json(c));
  Json index = Json::array();
  for (const auto& p : m.index) index.push_back(meta_to_json(p));
  const int k = m.tree.num_joints();
  return Json{
      {"format", "geomrep-dataset"},
      {"version", m.version},
      {"n_pairs", m.n_pairs},
      {"n_viewpoints", m.n_viewpoints},
      {"tree", to_json(m.tree)},
      {"map_size", {m.map_channels, m.map_height, m.map_width}},
      {"raster", {{"line_width_px", m.view.raster.line_width_px},
                  {"crop_extent_mm", m.view.crop.extent_mm},
                  {"reference_size", m.view.crop.reference_size}}},
      {"cameras", cams},
      {"subject_scales", m.subject_scales},
      {"splits", {{"train_subjects", m.train_subjects},
                  {"test_subjects", m.test_subjects},
                  {"train_cameras", m.train_cameras}}},
      {"families", m.families},
      {"seeds", {{"master", m.master_seed}}},
      {"config_hash", m.config_hash},
      {"has_labels", m.has_labels},
      {"shapes", {{"src", {m.map_channels, m.map_height, m.map_width}},
                  {"tgt", {m.map_channels, m.map_height, m.map_width}},
                  {"rot", {2, 3, 3}},
                  {"kp", {k, 3}},
                  {"pose", {k, 3}}}},
      {"pairs", index},
  };
}

void expect_dims(const GartTensor& t, const Json& declared, const fs::path& file) {
  const auto want = declared.get<std::vector<std::uint32_t>>();
  if (t.dims != want) {
    std::ostringstream os;
    os << file.string() << ": dims [";
    for (std::size_t i = 0; i < t.dims.size(); ++i) os << (i ? "," : "") << t.dims[i];
    os << "] do not match manifest shape " << declared.dump();
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
}

}  // namespace

fs::path write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "pairs");
  const int k = data.manifest.tree.num_joints();
  const auto map_dims = dims_of({data.manifest.map_channels, data.manifest.map_height, data.manifest.map_width});
  bool any_label = false;
  for (const auto& p : data.pairs) {
    const std::string stem = pair_file_stem(p.meta.id);
    auto write_map = [&](const PackedMap& pm, const char* suffix) {
      GartTensor t;
      t.dtype = DType::kBits;
      t.dims = map_dims;
      t.payload = pm.bytes;
      write_gart(dir / "pairs" / (stem + suffix), t);
    };
    write_map(p.source, "_src.gart");
    write_map(p.target, "_tgt.gart");

    std::vector<double> rot(18);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        rot[static_cast<std::size_t>(r * 3 + c)] = p.rot_ij.matrix()(r, c);
        rot[static_cast<std::size_t>(9 + r * 3 + c)] = p.rot_ji.matrix()(r, c);
      }
    }
    write_gart(dir / "pairs" / (stem + "_rot.gart"), GartTensor::from_f64(dims_of({2, 3, 3}), rot));

    std::vector<double> kp(static_cast<std::size_t>(k) * 3);
    for (int j = 0; j < k; ++j) {
      kp[static_cast<std::size_t>(j * 3)] = p.source_keypoints.points(j, 0);
      kp[static_cast<std::size_t>(j * 3 + 1)] = p.source_keypoints.points(j, 1);
      kp[static_cast<std::size_t>(j * 3 + 2)] = p.source_keypoints.visible[static_cast<std::size_t>(j)];
    }
    write_gart(dir / "pairs" / (stem + "_kp.gart"), GartTensor::from_f64(dims_of({k, 3}), kp));

    if (p.label) {
      any_label = true;
      std::vector<double> pose(p.label->data(), p.label->data() + p.label->size());
      write_gart(dir / "poses" / (stem + ".gart"), GartTensor::from_f64(dims_of({k, 3}), pose));
    }
  }
  DatasetManifest m = data.manifest;
  m.n_pairs = static_cast<std::int64_t>(data.pairs.size());
  m.has_labels = any_label;
  m.index.clear();
  for (const auto& p : data.pairs) m.index.push_back(p.meta);
  write_file(dir / "manifest.json", manifest_to_json(m).dump(1) + "\n");
  return dir;
}

Dataset read_dataset(const fs::path& dir, const ReadOptions& options) {
  auto open = [&](const fs::path& p) {
    if (options.audit) options.audit->opened.push_back(p.string());
    if (!fs::exists(p)) throw Error(ErrorKind::kIo, "missing dataset file " + p.string());
    return read_gart(p);
  };
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorKind::kMissingInput, "no manifest.json in " + dir.string());
  }
  if (options.audit) options.audit->opened.push_back(manifest_path.string());
  Json j;
  try {
    j = Json::parse(read_file(manifest_path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kIo, manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  DatasetManifest& m = ds.manifest;
  try {
    if (j.at("format").get<std::string>() != "geomrep-dataset") {
      throw Error(ErrorKind::kIo, manifest_path.string() + ": not a geomrep dataset manifest");
    }
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw Error(ErrorKind::kIo, "unsupported dataset version");
    m.n_pairs = j.at("n_pairs").get<std::int64_t>();
    m.n_viewpoints = j.at("n_viewpoints").get<int>();
    m.tree = tree_from_json(j.at("tree"));
    const auto size = j.at("map_size").get<std::vector<int>>();
    if (size.size() != 3) throw Error(ErrorKind::kIo, "map_size must have 3 entries");
    m.map_channels = size[0];
    m.map_height = size[1];
    m.map_width = size[2];
    m.view.raster.width = m.map_width;
    m.view.raster.height = m.map_height;
    m.view.raster.line_width_px = j.at("raster").at("line_width_px").get<double>();
    m.view.crop.extent_mm = j.at("raster").at("crop_extent_mm").get<double>();
    m.view.crop.reference_size = j.at("raster").at("reference_size").get<double>();
    m.view.raster.reference_size = m.view.crop.reference_size;
    for (const auto& c : j.at("cameras")) m.cameras.push_back(camera_from_json(c));
    m.subject_scales = j.at("subject_scales").get<std::vector<double>>();
    m.train_subjects = j.at("splits").at("train_subjects").get<std::vector<int>>();
    m.test_subjects = j.at("splits").at("test_subjects").get<std::vector<int>>();
    m.train_cameras = j.at("splits").at("train_cameras").get<std::vector<int>>();
    m.families = j.at("families").get<std::vector<std::string>>();
    m.master_seed = j.at("seeds").at("master").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.has_labels = j.at("has_labels").get<bool>();
    for (const auto& p : j.at("pairs")) m.index.push_back(meta_from_json(p));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kIo, manifest_path.string() + ": malformed manifest (" + e.what() + ")");
  }
  if (static_cast<std::int64_t>(m.index.size()) != m.n_pairs) {
    throw Error(ErrorKind::kIo, manifest_path.string() + ": n_pairs disagrees with the pair index");
  }

  const Json& shapes = j.at("shapes");
  const int k = m.tree.num_joints();
  ds.pairs.reserve(m.index.size());
  for (const auto& meta : m.index) {
    const std::string stem = pair_file_stem(meta.id);
    StoredPair sp;
    sp.meta = meta;
    auto read_map = [&](const char* suffix, const char* key) {
      const fs::path p = dir / "pairs" / (stem + suffix);
      GartTensor t = open(p);
      expect_dims(t, shapes.at(key), p);
      if (t.dtype != DType::kBits && t.dtype != DType::kU8) {
        throw Error(ErrorKind::kShapeMismatch, p.string() + ": skeleton maps must be binary");
      }
      PackedMap pm;
      pm.channels = m.map_channels;
      pm.height = m.map_height;
      pm.width = m.map_width;
      if (t.dtype == DType::kBits) {
        pm.bytes = std::move(t.payload);
      } else {
        pm.bytes = GartTensor::from_bits(t.dims, t.to_bits()).payload;
      }
      return pm;
    };
    sp.source = read_map("_src.gart", "src");
    sp.target = read_map("_tgt.gart", "tgt");

    const fs::path rot_path = dir / "pairs" / (stem + "_rot.gart");
    const GartTensor rot_t = open(rot_path);
    expect_dims(rot_t, shapes.at("rot"), rot_path);
    const auto rot = rot_t.to_f64();
    Eigen::Matrix3d rij, rji;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        rij(r, c) = rot[static_cast<std::size_t>(r * 3 + c)];
        rji(r, c) = rot[static_cast<std::size_t>(9 + r * 3 + c)];
      }
    }
    try {
      sp.rot_ij = Rotation3::from_matrix(rij);
      sp.rot_ji = Rotation3::from_matrix(rji);
    } catch (const Error& e) {
      throw Error(ErrorKind::kIo, rot_path.string() + ": " + e.what());
    }

    const fs::path kp_path = dir / "pairs" / (stem + "_kp.gart");
    const GartTensor kp_t = open(kp_path);
    expect_dims(kp_t, shapes.at("kp"), kp_path);
    const auto kp = kp_t.to_f64();
    sp.source_keypoints.points.resize(k, 2);
    sp.source_keypoints.visible.resize(static_cast<std::size_t>(k));
    for (int jn = 0; jn < k; ++jn) {
      sp.source_keypoints.points(jn, 0) = kp[static_cast<std::size_t>(jn * 3)];
      sp.source_keypoints.points(jn, 1) = kp[static_cast<std::size_t>(jn * 3 + 1)];
      sp.source_keypoints.visible[static_cast<std::size_t>(jn)] = kp[static_cast<std::size_t>(jn * 3 + 2)] != 0.0;
    }

    if (options.load_labels && !meta.is_virtual && m.has_labels) {
      const fs::path pose_path = dir / "poses" / (stem + ".gart");
      const GartTensor pose_t = open(pose_path);
      expect_dims(pose_t, shapes.at("pose"), pose_path);
      const auto pose = pose_t.to_f64();
      sp.label = PointsMatrix3(k, 3);
      std::copy(pose.begin(), pose.end(), sp.label->data());
    }
    ds.pairs.push_back(std::move(sp));
  }
  return ds;
}

Dataset read_datasets(const std::vector<fs::path>& dirs, const ReadOptions& options) {
  if (dirs.empty()) throw Error(ErrorKind::kMissingInput, "no dataset directories given");
  Dataset out = read_dataset(dirs.front(), options);
  for (std::size_t i = 1; i < dirs.size(); ++i) {
    Dataset next = read_dataset(dirs[i], options);
    if (next.manifest.map_channels != out.manifest.map_channels ||
        next.manifest.map_height != out.manifest.map_height ||
        next.manifest.map_width != out.manifest.map_width ||
        next.manifest.tree.parent != out.manifest.tree.parent) {
      throw Error(ErrorKind::kShapeMismatch,
                  dirs[i].string() + ": joint definition or map size differs from " + dirs.front().string());
    }
    for (auto& p : next.pairs) {
      out.manifest.index.push_back(p.meta);
      out.pairs.push_back(std::move(p));
    }
  }
  out.manifest.n_pairs = static_cast<std::int64_t>(out.pairs.size());
  return out;
}

}  // namespace geomrep
