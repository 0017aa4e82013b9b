// Acceptance runner: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <iostream>
#include <random>

#include "geomrep/config.hpp"
#include "geomrep/runtime.hpp"
#include "geomrep/gradcheck.hpp"
#include "geomrep/json_io.hpp"
#include "geomrep/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace geomrep;

namespace {

struct Scale {
  fs::path workdir = "acceptance_work";
  int overfit_steps = 7000;
  double overfit_lr = 3e-3;
  int benchmark_pairs = 20000;
  int benchmark_steps = 2500;
  int view_pairs = 8000;
  int view_virtual_pairs = 4000;
  int view_steps = 2000;
  int labels = 500;
  int regressor_steps = 3000;
  /// Weight of the consistency term wherever it is enabled.
  double consistency_weight = 1e-3;
  bool verbose = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  return pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  std::uniform_real_distribution<double> a(-kPi, kPi);
  return Rotation3::about_axis(axis.normalized(), a(rng)).matrix();
}

// Desk-scale generator shared by the training criteria.
GeneratorConfig desk_model() {
  GeneratorConfig m;
  m.widths = {16, 32, 64, 128};
  return m;
}

/// Trains (or reuses a finished run of) a representation in the work
/// directory, keyed by the hash of everything that determines it.
RepresentationCheckpoint representation(const Scale& s, const std::string& name, const Dataset& data,
                                        const GeneratorConfig& model, const TrainConfig& train, const PairFilter& filter,
                                        const std::string& filter_tag) {
  const std::string key = json_hash(Json{{"model", to_json(model)},
                                         {"train", to_json(train)},
                                         {"data", data.manifest.config_hash},
                                         {"filter", filter_tag}});
  RepresentationOptions opt;
  opt.output_dir = s.workdir / (name + "_" + key);
  opt.resume = true;
  opt.filter = filter;
  opt.config_hash = key;
  if (s.verbose) opt.log = &std::cerr;
  const auto t0 = Clock::now();
  auto r = train_representation(data, model, train, opt);
  std::fprintf(stderr, "[%s] representation %s ready in %.0f s\n", name.c_str(), key.c_str(), seconds_since(t0));
  return std::move(r.checkpoint);
}

Dataset corpus(CorpusConfig c) {
  c.config_hash = json_hash(Json{{"seed", c.seed},
                                 {"n_pairs", c.n_pairs},
                                 {"n_virtual_pairs", c.n_virtual_pairs},
                                 {"test_subjects", c.test_subjects},
                                 {"train_cameras", c.train_cameras},
                                 {"noise", c.keypoint_noise_px}});
  return generate_corpus(c);
}

// ---------------------------------------------------------------------------

bool geometry_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const std::vector<Camera> rig = build_rig(default_rig());
  PoseSampler sampler = default_pose_sampler(5);

  double tri = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Pose3D pose = sample_pose(sampler);
    std::vector<Keypoints2D> kps;
    for (const auto& cam : rig) kps.push_back(project(pose, cam));
    std::vector<TriangulationView> views;
    for (std::size_t v = 0; v < rig.size(); ++v) views.push_back({&kps[v], &rig[v]});
    const Triangulation t = triangulate(views);
    tri = std::max(tri, (t.pose.joints - pose.joints).rowwise().norm().maxCoeff());
  }

  double comp = 0.0;
  TorusSampler torus;
  torus.rng.seed(9);
  const Eigen::Vector3d look(0.0, 0.0, 900.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Camera a = sample_virtual_camera(torus, look);
    const Camera b = sample_virtual_camera(torus, look);
    const Camera c = sample_virtual_camera(torus, look);
    const Eigen::Matrix3d lhs = rotation_between(b, c).matrix() * rotation_between(a, b).matrix();
    comp = std::max(comp, (lhs - rotation_between(a, c).matrix()).cwiseAbs().maxCoeff());
    comp = std::max(comp, (rotation_between(a, b).matrix() * rotation_between(b, a).matrix() -
                           Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
  }

  double proc = 0.0;
  std::uniform_real_distribution<double> sc(0.5, 2.0), tr(-1000.0, 1000.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Pose3D gt = sample_pose(sampler);
    const Eigen::Matrix3d R = random_rotation(rng);
    const double s = sc(rng);
    const Eigen::RowVector3d t(tr(rng), tr(rng), tr(rng));
    Pose3D pred = gt;
    pred.joints = (s * (gt.joints * R.transpose())).rowwise() + t;
    const Alignment al = procrustes_align(pred, gt, true);
    proc = std::max(proc, (al.aligned.joints - gt.joints).rowwise().norm().maxCoeff());
    proc = std::max(proc, std::abs(al.scale - 1.0 / s) * 1000.0);
  }
  const double secs = seconds_since(t0);
  const bool pass = tri <= 1e-6 && comp <= 1e-9 && proc <= 1e-9 && secs < 10.0;
  return report(1, pass,
                fmt("triangulation %.2e mm (<=1e-6), composition %.2e (<=1e-9), procrustes %.2e (<=1e-9), %.1f s (<10)",
                    tri, comp, proc, secs));
}

// ---------------------------------------------------------------------------

PairBatch<double> random_pair_batch(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(0.2);
  PairBatch<double> b;
  b.source = nn::FeatureMap<double>(15, n, size, size);
  b.target = b.source;
  for (Eigen::Index i = 0; i < b.source.data.size(); ++i) {
    b.source.data.data()[i] = on(rng) ? 1.0 : 0.0;
    b.target.data.data()[i] = on(rng) ? 1.0 : 0.0;
  }
  for (int k = 0; k < n; ++k) {
    b.rot_ij.push_back(random_rotation(rng));
    b.rot_ji.push_back(b.rot_ij.back().transpose());
    b.ids.push_back(k);
  }
  return b;
}

bool gradient_suite() {
  const auto t0 = Clock::now();
  GeneratorConfig cfg;
  cfg.map_size = 16;
  cfg.widths = {4, 8};
  cfg.latent_points = 4;
  const auto batch = random_pair_batch(2, 16, 11);
  const std::pair<const char*, LossWeights> cases[] = {
      {"reconstruction", {1.0, 1.0, 0.0}}, {"consistency", {0.0, 0.0, 1.0}}, {"total", {1.0, 0.7, 0.3}}};
  bool pass = true;
  std::string detail;
  for (const auto& [name, w] : cases) {
    BidirectionalModel<double> model(cfg, 3);
    const auto r = check_gradients(
        model.params(), [&] { return total_loss(model, batch, w, false).total; },
        [&] { total_loss(model, batch, w, true); }, 1e-3, 24, 7,
        [&] { return activation_signature(model, batch); });
    pass = pass && r.max_rel_error <= 1e-4 && r.skipped_kinks * 4 < r.coordinates;
    detail += fmt("%s %.2e (%lld coords) ", name, r.max_rel_error, static_cast<long long>(r.coordinates));
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 120.0;
  return report(2, pass, detail + fmt("rel err <=1e-4, %.1f s (<120)", secs));
}

// ---------------------------------------------------------------------------

bool overfit(const Scale& s) {
  const auto t0 = Clock::now();
  CorpusConfig c;
  c.seed = 3;
  c.n_pairs = 200;
  c.test_subjects = {};
  const Dataset data = corpus(c);
  TrainConfig t;
  t.batch_size = 32;
  t.steps = s.overfit_steps;
  t.learning_rate = s.overfit_lr;
  t.decay_at = 0.8;
  t.checkpoint_every = 500;
  t.weights.w_consistency = s.consistency_weight;
  const auto ckpt = representation(s, "overfit", data, desk_model(), t, {}, "all");
  std::vector<std::size_t> all(data.pairs.size());
  std::iota(all.begin(), all.end(), 0);
  const SynthesisQuality q = synthesis_quality(ckpt.model, data, all);
  const double secs = seconds_since(t0);
  const bool pass = q.recon_fwd <= 0.01 && q.recon_bwd <= 0.01 && q.iou_fwd >= 0.6 && q.iou_bwd >= 0.6 &&
                    s.overfit_steps <= 20000;
  return report(3, pass,
                fmt("%d steps: recon fwd %.4f bwd %.4f (<=0.01), IoU fwd %.3f bwd %.3f (>=0.6), %.0f s", s.overfit_steps,
                    q.recon_fwd, q.recon_bwd, q.iou_fwd, q.iou_bwd, secs));
}

// ---------------------------------------------------------------------------

TrainConfig regression_config(const Scale& s, std::uint64_t seed) {
  TrainConfig t;
  t.seed = seed;
  t.label_budget = s.labels;
  t.regressor_steps = s.regressor_steps;
  return t;
}

bool low_label(const Scale& s) {
  const auto t0 = Clock::now();
  CorpusConfig c;
  c.seed = 4;
  c.n_pairs = s.benchmark_pairs;
  const Dataset data = corpus(c);
  TrainConfig t;
  t.steps = s.benchmark_steps;
  t.checkpoint_every = 500;
  t.weights.w_consistency = s.consistency_weight;
  const auto repr = representation(s, "benchmark", data, desk_model(), t, {}, "all");

  std::vector<double> latent, baseline;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const TrainConfig rt = regression_config(s, seed);
    const auto lat = train_regressor(data, repr.model.fwd, rt);
    const auto kp = train_baseline_regressor(data, rt, RegressorInput::kKeypoints, nullptr);
    latent.push_back(run_protocol(data, lat.checkpoint, &repr.model.fwd, Protocol::kP1).aggregate.mpjpe);
    baseline.push_back(run_protocol(data, kp.checkpoint, nullptr, Protocol::kP1).aggregate.mpjpe);
    std::fprintf(stderr, "[benchmark] seed %llu latent %.1f mm keypoints %.1f mm\n",
                 static_cast<unsigned long long>(seed), latent.back(), baseline.back());
  }
  const double ml = median(latent), mb = median(baseline);
  const double gain = 1.0 - ml / mb;
  return report(4, gain >= 0.05,
                fmt("median MPJPE latent %.1f mm vs keypoints %.1f mm, improvement %.1f%% (>=5%%), %.0f s", ml, mb,
                    100.0 * gain, seconds_since(t0)));
}

// ---------------------------------------------------------------------------

Dataset view_corpus(const Scale& s) {
  CorpusConfig c;
  c.seed = 5;
  c.n_pairs = s.view_pairs;
  c.n_virtual_pairs = s.view_virtual_pairs;
  c.train_cameras = {0, 1, 2};
  return corpus(c);
}

RepresentationCheckpoint view_representation(const Scale& s, const Dataset& data, bool consistency, bool augment) {
  TrainConfig t;
  t.steps = s.view_steps;
  t.checkpoint_every = 500;
  t.seed = 1;
  t.weights.w_consistency = consistency ? s.consistency_weight : 0.0;
  const PairFilter real_only = [](const PairMeta& m) { return !m.is_virtual; };
  const std::string name = std::string("view_") + (consistency ? "rc" : "norc") + (augment ? "_aug" : "");
  return representation(s, name, data, desk_model(), t, augment ? PairFilter{} : real_only,
                         augment ? "all" : "real");
}

/// Median over regression seeds of the injected-prior baseline's metric.
double injected_mpjpe(const Scale& s, const Dataset& data, const RepresentationCheckpoint& repr, Protocol p,
                      const char* tag) {
  std::vector<double> v;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r =
        train_baseline_regressor(data, regression_config(s, seed), RegressorInput::kKeypointsWithPrior, &repr.model.fwd);
    v.push_back(run_protocol(data, r.checkpoint, &repr.model.fwd, p).aggregate.mpjpe);
    std::fprintf(stderr, "[%s] seed %llu %s %.1f mm\n", tag, static_cast<unsigned long long>(seed), to_string(p),
                 v.back());
  }
  return median(v);
}

bool consistency_study(const Scale& s) {
  const auto t0 = Clock::now();
  const Dataset data = view_corpus(s);
  const auto with_rc = view_representation(s, data, true, false);
  const auto without_rc = view_representation(s, data, false, false);
  const auto held_out = protocol_samples(data, Protocol::kP3);
  const double res_rc = latent_residual(with_rc.model, data, held_out);
  const double res_none = latent_residual(without_rc.model, data, held_out);
  const double m_rc = injected_mpjpe(s, data, with_rc, Protocol::kP1, "with L_rc");
  const double m_none = injected_mpjpe(s, data, without_rc, Protocol::kP1, "without L_rc");
  const bool a = res_rc <= 0.5 * res_none;
  const bool b = m_rc <= m_none;
  return report(5, a && b,
                fmt("(a) held-out-view residual with %.4f vs without %.4f, ratio %.3f (<=0.5) %s; "
                    "(b) median MPJPE with %.1f mm vs without %.1f mm %s; %.0f s",
                    res_rc, res_none, res_rc / res_none, a ? "ok" : "fail", m_rc, m_none, b ? "ok" : "fail",
                    seconds_since(t0)));
}

bool augmentation_study(const Scale& s) {
  const auto t0 = Clock::now();
  const Dataset data = view_corpus(s);
  const auto plain = view_representation(s, data, false, false);
  const auto augmented = view_representation(s, data, false, true);
  const double m_plain = injected_mpjpe(s, data, plain, Protocol::kP3, "no augmentation");
  const double m_aug = injected_mpjpe(s, data, augmented, Protocol::kP3, "augmentation");
  return report(6, m_aug <= m_plain,
                fmt("P3 median MPJPE with augmentation %.1f mm vs without %.1f mm, %.0f s", m_aug, m_plain,
                    seconds_since(t0)));
}

// ---------------------------------------------------------------------------

bool metric_fixtures() {
  Pose3D gt;
  gt.joints = PointsMatrix3::Zero(16, 3);
  for (int k = 0; k < 16; ++k) gt.joints.row(k) << 10.0 * k, -5.0 * k, 3.0 * k * k;
  Pose3D pred = gt;
  pred.joints.row(7) += Eigen::RowVector3d(3.0, 4.0, 0.0);
  const double hand = std::abs(mpjpe(pred, gt) - 5.0 / 16.0);

  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  PoseSampler sampler = default_pose_sampler(8);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    Pose3D g = sample_pose(sampler);
    g.frame = Frame::kCamera;
    Pose3D p = g;
    const double sigma = 5.0 + 100.0 * std::abs(n(rng));
    for (Eigen::Index r = 0; r < p.joints.rows(); ++r) {
      for (int c = 0; c < 3; ++c) p.joints(r, c) += sigma * n(rng);
    }
    if (pmpjpe(p, g) > mpjpe(p, g) + 1e-9) ++violations;
  }

  std::uniform_real_distribution<double> u(0.0, 150.0);
  std::vector<double> errors(100000);
  for (auto& e : errors) e = u(rng);
  const PckAuc pa = pck_auc(errors, 150.0, 31);
  const bool pass = hand <= 1e-12 && violations == 0 && std::abs(pa.pck - 100.0) <= 1e-12 &&
                    std::abs(pa.auc - 0.5) <= 0.01;
  return report(7, pass,
                fmt("hand fixture |err| %.1e (<=1e-12), pmpjpe>mpjpe in %d/1000, PCK %.2f (100), AUC %.4f (0.5+-0.01)",
                    hand, violations, pa.pck, pa.auc));
}

// ---------------------------------------------------------------------------

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

bool determinism(const Scale& s) {
  const fs::path root = s.workdir / "determinism";
  fs::remove_all(root);
  CorpusConfig c;
  c.seed = 11;
  c.n_pairs = 300;
  c.n_virtual_pairs = 60;
  const Dataset d1 = corpus(c);
  const Dataset d2 = corpus(c);
  write_dataset(d1, root / "a");
  write_dataset(d2, root / "b");
  const bool data_same = tree_bytes(root / "a") == tree_bytes(root / "b");

  GeneratorConfig m;
  m.widths = {8, 16, 32, 64};
  m.latent_points = 32;
  TrainConfig t;
  t.steps = 12;
  t.batch_size = 8;
  t.checkpoint_every = 4;
  const Dataset loaded = read_dataset(root / "a");
  auto train_into = [&](const fs::path& dir, std::int64_t split) {
    RepresentationOptions o;
    o.output_dir = dir;
    o.resume = true;
    o.max_steps_this_call = split;
    train_representation(loaded, m, t, o);
    o.max_steps_this_call = -1;
    if (split > 0) train_representation(loaded, m, t, o);
  };
  train_into(root / "run1", -1);
  train_into(root / "run2", -1);
  train_into(root / "run3", 5);
  const std::string r1 = tree_bytes(root / "run1");
  const bool train_same = r1 == tree_bytes(root / "run2");
  const bool resume_same = r1 == tree_bytes(root / "run3");

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> f64(257);
  for (auto& v : f64) v = n(rng) * 1e30;
  f64[0] = std::numeric_limits<double>::denorm_min();
  f64[1] = -0.0;
  std::vector<float> f32(f64.begin(), f64.end());
  std::vector<std::uint8_t> bits(1001);
  for (auto& b : bits) b = rng() & 1u;
  const GartTensor t64 = GartTensor::from_f64({257}, f64);
  const GartTensor t32 = GartTensor::from_f32({257}, f32);
  const GartTensor tb = GartTensor::from_bits({7, 11, 13}, bits);
  bool roundtrip = true;
  for (const GartTensor* g : {&t64, &t32, &tb}) {
    const std::string bytes = encode_gart(*g);
    roundtrip = roundtrip && encode_gart(decode_gart(bytes, "mem")) == bytes;
  }
  roundtrip = roundtrip && std::memcmp(decode_gart(encode_gart(t64), "m").to_f64().data(), f64.data(), 257 * 8) == 0 &&
              decode_gart(encode_gart(tb), "m").to_bits() == bits;

  int rejected = 0;
  const std::string good = encode_gart(t32);
  const std::vector<std::string> corrupt = {good.substr(0, good.size() - 1), "GARX" + good.substr(4),
                                            good.substr(0, 4) + std::string(1, '\x09') + good.substr(5),
                                            good + "tail", std::string()};
  for (const auto& bad : corrupt) {
    try {
      decode_gart(bad, "corrupt");
    } catch (const Error&) {
      ++rejected;
    }
  }
  const bool pass = data_same && train_same && resume_same && roundtrip && rejected == static_cast<int>(corrupt.size());
  return report(8, pass,
                fmt("dataset replay %s, training replay %s, resumed replay %s, GART round-trip %s, corrupt rejected %d/%zu",
                    data_same ? "identical" : "DIFFERS", train_same ? "identical" : "DIFFERS",
                    resume_same ? "identical" : "DIFFERS", roundtrip ? "bit-exact" : "MISMATCH", rejected,
                    corrupt.size()));
}

}  // namespace

int main(int argc, char** argv) {
  geomrep::tune_allocator();
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  Scale s;
  app.add_option("-c,--criterion", only, "run only these criteria (1-8)");
  app.add_option("--workdir", s.workdir, "scratch and cache directory");
  app.add_option("--overfit-steps", s.overfit_steps);
  app.add_option("--overfit-lr", s.overfit_lr);
  app.add_option("--benchmark-pairs", s.benchmark_pairs);
  app.add_option("--benchmark-steps", s.benchmark_steps);
  app.add_option("--view-pairs", s.view_pairs);
  app.add_option("--view-virtual-pairs", s.view_virtual_pairs);
  app.add_option("--view-steps", s.view_steps);
  app.add_option("--labels", s.labels);
  app.add_option("--regressor-steps", s.regressor_steps);
  app.add_option("--consistency-weight", s.consistency_weight);
  app.add_flag("-v,--verbose", s.verbose, "stream per-step losses to stderr");
  CLI11_PARSE(app, argc, argv);
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8};
  fs::create_directories(s.workdir);

  bool all = true;
  for (int id : only) {
    try {
      switch (id) {
        case 1: all &= geometry_suite(); break;
        case 2: all &= gradient_suite(); break;
        case 3: all &= overfit(s); break;
        case 4: all &= low_label(s); break;
        case 5: all &= consistency_study(s); break;
        case 6: all &= augmentation_study(s); break;
        case 7: all &= metric_fixtures(); break;
        case 8: all &= determinism(s); break;
        default: std::fprintf(stderr, "unknown criterion %d\n", id); return 2;
      }
    } catch (const std::exception& e) {
      all &= report(id, false, std::string("error: ") + e.what());
    }
  }
  return all ? 0 : 1;
}
