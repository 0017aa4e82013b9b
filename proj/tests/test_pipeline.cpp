#include <doctest.h>

#include <zlib.h>

#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "geomrep/config.hpp"
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

const Dataset& corpus() {
  static const Dataset d = [] {
    CorpusConfig c;
    c.seed = 31;
    c.n_pairs = 120;
    c.n_virtual_pairs = 20;
    c.train_cameras = {0, 1, 2};
    c.config_hash = "pipeline";
    return generate_corpus(c);
  }();
  return d;
}

GeneratorConfig tiny_model() {
  GeneratorConfig m;
  m.widths = {4, 8, 16, 32};
  m.latent_points = 8;
  return m;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.steps = 6;
  t.batch_size = 4;
  t.checkpoint_every = 2;
  t.label_budget = 20;
  t.regressor_steps = 30;
  return t;
}

std::vector<std::vector<float>> snapshot(const nn::ParamList<float>& ps) {
  std::vector<std::vector<float>> out;
  for (const auto* p : ps) out.emplace_back(p->value.data(), p->value.data() + p->value.size());
  return out;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

Pose3D pose_of(std::initializer_list<double> xyz, Frame f = Frame::kCamera) {
  Pose3D p;
  p.frame = f;
  const auto n = static_cast<Eigen::Index>(xyz.size() / 3);
  p.joints.resize(n, 3);
  auto it = xyz.begin();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p.joints(i, c) = *it++;
  return p;
}

}  // namespace

// --- training ---------------------------------------------------------------

TEST_CASE("representation training replays exactly from a seed") {
  const auto a = train_representation(corpus(), tiny_model(), tiny_train());
  const auto b = train_representation(corpus(), tiny_model(), tiny_train());
  CHECK(snapshot(const_cast<BidirectionalModel<float>&>(a.checkpoint.model).params()) ==
        snapshot(const_cast<BidirectionalModel<float>&>(b.checkpoint.model).params()));
  REQUIRE(a.curve.size() == 6);
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss.total == b.curve[i].loss.total);
  TrainConfig other = tiny_train();
  other.seed = 2;
  const auto c = train_representation(corpus(), tiny_model(), other);
  CHECK(c.curve[0].loss.total != a.curve[0].loss.total);
}

TEST_CASE("resumed training matches an uninterrupted run and keeps a monotone step counter") {
  const fs::path full = scratch("full"), split = scratch("split");
  RepresentationOptions o;
  o.output_dir = full;
  train_representation(corpus(), tiny_model(), tiny_train(), o);
  o.output_dir = split;
  o.resume = true;
  o.max_steps_this_call = 3;
  train_representation(corpus(), tiny_model(), tiny_train(), o);
  CHECK(load_representation(split).step == 3);
  o.max_steps_this_call = -1;
  train_representation(corpus(), tiny_model(), tiny_train(), o);
  CHECK(checkpoint_id(full) == checkpoint_id(split));
  CHECK(read_file(full / "losses.jsonl") == read_file(split / "losses.jsonl"));
  const auto lines = lines_of(split / "losses.jsonl");
  REQUIRE(lines.size() == 6);
  for (std::size_t i = 0; i < lines.size(); ++i) CHECK(Json::parse(lines[i]).at("step") == i);
}

TEST_CASE("checkpoints round-trip parameters and optimizer state") {
  const fs::path dir = scratch("ckpt");
  RepresentationOptions o;
  o.output_dir = dir;
  const auto r = train_representation(corpus(), tiny_model(), tiny_train(), o);
  nn::Adam<float> adam;
  auto loaded = load_representation(dir, &adam);
  CHECK(loaded.step == 6);
  CHECK(adam.steps() == 6);
  CHECK(snapshot(loaded.model.params()) == snapshot(const_cast<BidirectionalModel<float>&>(r.checkpoint.model).params()));
  CHECK(kind_of([&] { load_representation(scratch("absent")); }) == ErrorKind::kMissingInput);
}

TEST_CASE("non-finite losses name the step, term and batch") {
  const fs::path dir = scratch("nan");
  RepresentationOptions o;
  o.output_dir = dir;
  o.resume = true;
  o.max_steps_this_call = 2;
  train_representation(corpus(), tiny_model(), tiny_train(), o);
  nn::Adam<float> adam;
  auto ck = load_representation(dir, &adam);
  ck.model.fwd.decoder_params().back()->value.setConstant(std::numeric_limits<float>::quiet_NaN());
  save_representation(dir, ck, &adam);
  try {
    o.max_steps_this_call = -1;
    train_representation(corpus(), tiny_model(), tiny_train(), o);
    FAIL("expected kNonFinite");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonFinite);
    const std::string msg = e.what();
    CHECK(msg.find("step 2") != std::string::npos);
    CHECK(msg.find("recon_fwd") != std::string::npos);
    CHECK(msg.find("batch ids") != std::string::npos);
  }
}

TEST_CASE("representation learning never reads pose labels") {
  const fs::path dir = scratch("audit_ds");
  write_dataset(corpus(), dir);
  IoAudit audit;
  ReadOptions ro;
  ro.audit = &audit;
  const Dataset d = read_dataset(dir, ro);
  train_representation(d, tiny_model(), tiny_train());
  CHECK(!audit.touched("poses"));
}

TEST_CASE("regression keeps the encoder frozen") {
  const auto repr = train_representation(corpus(), tiny_model(), tiny_train());
  Generator<float> enc = repr.checkpoint.model.fwd;
  const auto before = snapshot(enc.params());
  const auto r = train_regressor(corpus(), enc, tiny_train());
  CHECK(snapshot(enc.params()) == before);
  CHECK(r.curve.size() == 30);
  CHECK(r.checkpoint.label_ids.size() == 20);
  CHECK(r.curve.back() < r.curve.front());
}

TEST_CASE("label budget is validated and the subset is deterministic") {
  CHECK(kind_of([&] { labeled_subset(corpus(), 0, 1); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { labeled_subset(corpus(), 100000, 1); }) == ErrorKind::kConfig);
  const auto a = labeled_subset(corpus(), 15, 4);
  CHECK(a == labeled_subset(corpus(), 15, 4));
  CHECK(a != labeled_subset(corpus(), 15, 5));
  for (auto i : a) {
    const auto& p = corpus().pairs[i];
    CHECK(corpus().is_train(p.meta));
    CHECK(!p.meta.is_virtual);
    CHECK(p.label.has_value());
  }
}

TEST_CASE("baselines and the injected prior") {
  const auto repr = train_representation(corpus(), tiny_model(), tiny_train());
  const auto kp = train_baseline_regressor(corpus(), tiny_train(), RegressorInput::kKeypoints, nullptr);
  CHECK(kp.checkpoint.config.input_dim == 32);
  CHECK(kp.checkpoint.config.prior_dim == 0);
  const auto inj =
      train_baseline_regressor(corpus(), tiny_train(), RegressorInput::kKeypointsWithPrior, &repr.checkpoint.model.fwd);
  CHECK(inj.checkpoint.config.prior_dim == 24);
  CHECK(kind_of([&] {
          train_baseline_regressor(corpus(), tiny_train(), RegressorInput::kKeypointsWithPrior, nullptr);
        }) == ErrorKind::kDependencyOrder);
  CHECK(kind_of([&] { train_baseline_regressor(corpus(), tiny_train(), RegressorInput::kLatent, nullptr); }) ==
        ErrorKind::kConfig);
  const fs::path dir = scratch("reg");
  save_regressor(dir, inj.checkpoint);
  const auto back = load_regressor(dir);
  const auto idx = protocol_samples(corpus(), Protocol::kP1);
  const RegressionSet set = regression_set(corpus(), idx, &repr.checkpoint.model.fwd, false);
  CHECK(predict(back, set) == predict(inj.checkpoint, set));
}

TEST_CASE("regressor weight decay shrinks the weights") {
  auto weight_norm = [](double decay) {
    TrainConfig t = tiny_train();
    t.regressor_weight_decay = decay;
    auto r = train_baseline_regressor(corpus(), t, RegressorInput::kKeypoints, nullptr);
    double n = 0.0;
    for (auto* p : r.checkpoint.regressor.params()) n += static_cast<double>(p->value.squaredNorm());
    return n;
  };
  CHECK(weight_norm(50.0) < weight_norm(0.0));
}

// --- evaluation -------------------------------------------------------------

TEST_CASE("MPJPE hand fixture") {
  Pose3D gt;
  gt.joints = PointsMatrix3::Zero(16, 3);
  for (int k = 0; k < 16; ++k) gt.joints.row(k) << k, 2.0 * k, -k;
  Pose3D pred = gt;
  pred.joints.row(9) += Eigen::RowVector3d(3.0, 4.0, 0.0);
  CHECK(std::abs(mpjpe(pred, gt) - 5.0 / 16.0) <= 1e-12);
  const auto e = joint_errors(pred, gt);
  CHECK(e[9] == doctest::Approx(5.0));
  CHECK(std::accumulate(e.begin(), e.end(), 0.0) == doctest::Approx(5.0));
}

TEST_CASE("MPJPE is root-relative and rejects mixed frames") {
  const Pose3D gt = pose_of({0, 0, 0, 1, 0, 0, 0, 2, 0});
  Pose3D shifted = gt;
  shifted.joints.rowwise() += Eigen::RowVector3d(100, -50, 7);
  CHECK(mpjpe(shifted, gt) == doctest::Approx(0.0));
  const Pose3D world = pose_of({0, 0, 0, 1, 0, 0, 0, 2, 0}, Frame::kWorld);
  CHECK(kind_of([&] { mpjpe(world, gt); }) == ErrorKind::kFrameMismatch);
  CHECK(kind_of([&] { mpjpe(pose_of({0, 0, 0}), gt); }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("PMPJPE removes similarity transforms and never exceeds MPJPE") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 200.0);
  for (int t = 0; t < 200; ++t) {
    Pose3D gt;
    gt.joints.resize(16, 3);
    for (Eigen::Index i = 0; i < gt.joints.size(); ++i) gt.joints.data()[i] = n(rng);
    Pose3D noisy = gt;
    for (Eigen::Index i = 0; i < noisy.joints.size(); ++i) noisy.joints.data()[i] += 0.2 * n(rng);
    CHECK(pmpjpe(noisy, gt) <= mpjpe(noisy, gt) + 1e-9);
    Pose3D moved = gt;
    const Eigen::Matrix3d R = Rotation3::about_axis(Eigen::Vector3d(1, 2, 3).normalized(), 0.1 * t).matrix();
    moved.joints = (1.7 * gt.joints * R.transpose()).rowwise() + Eigen::RowVector3d(5, 6, 7);
    CHECK(pmpjpe(moved, gt) < 1e-9);
  }
}

TEST_CASE("PCK and AUC fixtures") {
  const PckAuc hand = pck_auc({0.0, 75.0, 150.0, 151.0});
  CHECK(hand.pck == doctest::Approx(75.0));
  const PckAuc zero = pck_auc(std::vector<double>(10, 0.0));
  CHECK(zero.pck == 100.0);
  CHECK(zero.auc == doctest::Approx(1.0));
  const PckAuc far = pck_auc(std::vector<double>(10, 1e4));
  CHECK(far.pck == 0.0);
  CHECK(far.auc == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 150.0);
  std::vector<double> e(100000);
  for (auto& v : e) v = u(rng);
  const PckAuc uni = pck_auc(e);
  CHECK(uni.pck == 100.0);
  CHECK(std::abs(uni.auc - 0.5) <= 0.01);
  CHECK(kind_of([&] { pck_auc({}); }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("protocol splits") {
  const Dataset& d = corpus();
  const auto p1 = protocol_samples(d, Protocol::kP1);
  const auto p3 = protocol_samples(d, Protocol::kP3);
  CHECK(!p1.empty());
  CHECK(!p3.empty());
  CHECK(p3.size() < p1.size());
  CHECK(protocol_samples(d, Protocol::kP2) == p1);
  for (auto i : p1) {
    CHECK(!d.is_train(d.pairs[i].meta));
    CHECK(!d.pairs[i].meta.is_virtual);
  }
  for (auto i : p3) CHECK(d.pairs[i].meta.cam_i == 3);
  CHECK(protocol_from_string("P2") == Protocol::kP2);
  CHECK(kind_of([] { protocol_from_string("P7"); }) == ErrorKind::kConfig);
}

TEST_CASE("reports are additive and replay identically") {
  const auto kp = train_baseline_regressor(corpus(), tiny_train(), RegressorInput::kKeypoints, nullptr);
  const EvalReport r = run_protocol(corpus(), kp.checkpoint, nullptr, Protocol::kP1);
  REQUIRE(r.aggregate.count == static_cast<std::int64_t>(r.samples.size()));
  double sum = 0.0, psum = 0.0;
  for (const auto& s : r.samples) {
    sum += s.mpjpe;
    psum += s.pmpjpe;
  }
  CHECK(r.aggregate.mpjpe == doctest::Approx(sum / static_cast<double>(r.samples.size())).epsilon(1e-12));
  CHECK(r.aggregate.pmpjpe == doctest::Approx(psum / static_cast<double>(r.samples.size())).epsilon(1e-12));
  std::int64_t fam = 0;
  for (const auto& f : r.per_family) fam += f.count;
  CHECK(fam == r.aggregate.count);
  CHECK(r.primary() == r.aggregate.mpjpe);
  const EvalReport again = run_protocol(corpus(), kp.checkpoint, nullptr, Protocol::kP1);
  CHECK(to_json(r).dump() == to_json(again).dump());
  const EvalReport p2 = run_protocol(corpus(), kp.checkpoint, nullptr, Protocol::kP2);
  CHECK(p2.primary() == p2.aggregate.pmpjpe);
}

TEST_CASE("an untrained regressor evaluates to a finite error") {
  TrainConfig t = tiny_train();
  t.regressor_steps = 0;
  const auto kp = train_baseline_regressor(corpus(), t, RegressorInput::kKeypoints, nullptr);
  const EvalReport r = run_protocol(corpus(), kp.checkpoint, nullptr, Protocol::kP3);
  CHECK(std::isfinite(r.aggregate.mpjpe));
  CHECK(r.aggregate.mpjpe > 10.0);
}

TEST_CASE("latent residual and synthesis quality") {
  const auto repr = train_representation(corpus(), tiny_model(), tiny_train());
  const auto idx = protocol_samples(corpus(), Protocol::kP3);
  const double res = latent_residual(repr.checkpoint.model, corpus(), idx);
  CHECK(std::isfinite(res));
  CHECK(res > 0.0);
  const SynthesisQuality q = synthesis_quality(repr.checkpoint.model, corpus(), idx);
  CHECK(q.iou_fwd >= 0.0);
  CHECK(q.iou_fwd <= 1.0);
  CHECK(q.recon_fwd > 0.0);
}

TEST_CASE("interpolation endpoints and strip image") {
  const auto repr = train_representation(corpus(), tiny_model(), tiny_train());
  const auto& dec = repr.checkpoint.model.bwd;
  const LatentCode a = encode(repr.checkpoint.model.fwd, corpus().pairs[0].source.unpack());
  const LatentCode b = encode(repr.checkpoint.model.fwd, corpus().pairs[7].source.unpack());
  const auto path = interpolate_latents(a, b, 5, dec);
  REQUIRE(path.size() == 5);
  CHECK((path.front().latent.points - a.points).norm() == 0.0);
  CHECK((path.back().latent.points - b.points).norm() < 1e-12);
  CHECK((path[2].latent.points - 0.5 * (a.points + b.points)).norm() < 1e-12);
  CHECK(kind_of([&] { interpolate_latents(a, b, 1, dec); }) == ErrorKind::kConfig);

  std::vector<SkeletonMap> maps;
  for (const auto& s : path) maps.push_back(s.map);
  const fs::path png = scratch("png") / "strip.png";
  write_map_strip_png(png, maps, 1);
  const std::string bytes = read_file(png);
  REQUIRE(bytes.size() > 33);
  CHECK(bytes.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
  auto be32 = [&](std::size_t off) {
    return (std::uint32_t(std::uint8_t(bytes[off])) << 24) | (std::uint32_t(std::uint8_t(bytes[off + 1])) << 16) |
           (std::uint32_t(std::uint8_t(bytes[off + 2])) << 8) | std::uint32_t(std::uint8_t(bytes[off + 3]));
  };
  CHECK(bytes.substr(12, 4) == "IHDR");
  const std::uint32_t w = be32(16), h = be32(20);
  CHECK(w == 5u * 64u + 4u * 4u);
  CHECK(h == 64u);
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + 12), 17);
  CHECK(be32(29) == crc);
  // Inflate IDAT: one filter byte plus RGB per row.
  const std::size_t idat = bytes.find("IDAT");
  REQUIRE(idat != std::string::npos);
  const std::uint32_t len = be32(idat - 4);
  std::vector<Bytef> raw(static_cast<std::size_t>(h) * (1 + 3 * w));
  uLongf raw_len = raw.size();
  CHECK(uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(bytes.data() + idat + 4), len) == Z_OK);
  CHECK(raw_len == raw.size());
}

// --- configuration ----------------------------------------------------------

TEST_CASE("empty config takes every default") {
  const RunConfig rc = parse_run_config(Json::object());
  CHECK(rc.data.n_pairs == 20000);
  CHECK(rc.data.rig.positions.size() == 4);
  CHECK(rc.model.latent_points == 128);
  CHECK(rc.model.widths == std::vector<int>{32, 64, 128, 256});
  CHECK(rc.train.batch_size == 32);
  CHECK(rc.eval.pck_threshold_mm == 150.0);
  CHECK(rc.output_dir == fs::path("run"));
}

TEST_CASE("config errors name the field path") {
  auto message = [](const Json& j) {
    try {
      parse_run_config(j);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfig);
      return std::string(e.what());
    }
    FAIL("expected kConfig");
    return std::string();
  };
  CHECK(message(Json::parse(R"({"data":{"torus":{"azimuth_range":[3,1]}}})")).find("data.torus.azimuth_range") !=
        std::string::npos);
  CHECK(message(Json::parse(R"({"data":{"torus":{"azimuth_range":[0,7]}}})")).find("data.torus.azimuth_range") !=
        std::string::npos);
  CHECK(message(Json::parse(R"({"model":{"colour":1}})")).find("model.colour") != std::string::npos);
  CHECK(message(Json::parse(R"({"extra":1})")).find("extra") != std::string::npos);
  CHECK(message(Json::parse(R"({"train":{"seed":3}})")).find("seeds.train") != std::string::npos);
  CHECK(message(Json::parse(R"({"train":{"batch_size":"big"}})")).find("train.batch_size") != std::string::npos);
  CHECK(message(Json::parse(R"({"data":{"train_cameras":[0,9]}})")).find("data.train_cameras") != std::string::npos);
  CHECK(message(Json::parse(R"({"model":{"widths":[8,16,32,64,128,256,512]}})")).find("model") != std::string::npos);
  CHECK(message(Json::parse(R"({"train":{"regressor_weight_decay":-1}})")).find("train.regressor_weight_decay") !=
        std::string::npos);
}

TEST_CASE("overrides and hashes") {
  Json j = Json::object();
  apply_override(j, "train.steps=50");
  apply_override(j, "output_dir=elsewhere");
  apply_override(j, "data.train_cameras=[0,1]");
  const RunConfig rc = parse_run_config(j);
  CHECK(rc.train.steps == 50);
  CHECK(rc.output_dir == fs::path("elsewhere"));
  CHECK(rc.data.train_cameras == std::vector<int>{0, 1});
  CHECK(kind_of([&] { apply_override(j, "no_equals_sign"); }) == ErrorKind::kConfig);

  RunConfig moved = rc;
  moved.output_dir = "other";
  CHECK(moved.hash() == rc.hash());
  RunConfig trained = rc;
  trained.train.steps = 51;
  CHECK(trained.hash() != rc.hash());
  CHECK(trained.data_hash() == rc.data_hash());
  RunConfig reseeded = rc;
  reseeded.seeds.data = 9;
  CHECK(reseeded.data_hash() != rc.data_hash());
  CHECK(parse_run_config(rc.to_json()).hash() == rc.hash());
  CHECK(rc.corpus().config_hash == rc.data_hash());
}

// --- command line -----------------------------------------------------------

#ifdef GEOMREP_CLI
namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun cli(const fs::path& cwd, const std::string& args) {
  const fs::path out = cwd / "stdout.txt";
  const std::string cmd =
      "cd '" + cwd.string() + "' && '" + GEOMREP_CLI + "' " + args + " > '" + out.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  return r;
}

fs::path cli_workspace(const std::string& name) {
  const fs::path dir = scratch(name);
  fs::create_directories(dir);
  write_file(dir / "cfg.json", R"({
  "data": {"n_pairs": 90, "n_virtual_pairs": 10, "train_cameras": [0, 1, 2]},
  "model": {"widths": [4, 8, 16, 32], "latent_points": 8},
  "train": {"steps": 4, "batch_size": 4, "checkpoint_every": 2, "label_budget": 12, "regressor_steps": 10},
  "output_dir": "out"
})");
  return dir;
}

}  // namespace

TEST_CASE("cli exit codes") {
  const fs::path w = cli_workspace("cli_codes");
  CHECK(cli(w, "gen-data -c missing.json").code == 2);
  const auto az = cli(w, "gen-data -c cfg.json --set data.torus.azimuth_range=[2,1]");
  CHECK(az.code == 2);
  CHECK(az.out.find("data.torus.azimuth_range") != std::string::npos);
  CHECK(cli(w, "gen-data -c cfg.json --set data.unknown=1").code == 2);
  CHECK(cli(w, "train-repr -c cfg.json").code == 3);
  CHECK(cli(w, "gen-data -c cfg.json").code == 0);
  CHECK(cli(w, "train-pose -c cfg.json").code == 4);
  CHECK(cli(w, "train-baseline -c cfg.json --input keypoints2d+latent").code == 4);
  CHECK(cli(w, "eval -c cfg.json --protocol P9").code == 2);
  CHECK(cli(w, "frobnicate").code == 2);
}

TEST_CASE("cli pipeline replays and verifies") {
  const fs::path w = cli_workspace("cli_flow");
  REQUIRE(cli(w, "gen-data -c cfg.json").code == 0);
  const std::string first = read_file(w / "out/dataset/manifest.json");
  const std::string pair = read_file(w / "out/dataset/pairs" / (pair_file_stem(5) + "_src.gart"));
  REQUIRE(cli(w, "gen-data -c cfg.json --verify").code == 0);
  CHECK(read_file(w / "out/dataset/manifest.json") == first);
  CHECK(read_file(w / "out/dataset/pairs" / (pair_file_stem(5) + "_src.gart")) == pair);

  const auto repr = cli(w, "train-repr -c cfg.json --set train.steps=2");
  REQUIRE(repr.code == 0);
  CHECK(repr.out.find("\"step\":1") != std::string::npos);
  REQUIRE(cli(w, "train-repr -c cfg.json --resume --log repr_log.jsonl").code == 0);
  const auto log = lines_of(w / "repr_log.jsonl");
  REQUIRE(log.size() == 2);
  CHECK(Json::parse(log[0]).at("step") == 2);
  CHECK(Json::parse(log[1]).at("step") == 3);

  REQUIRE(cli(w, "train-pose -c cfg.json").code == 0);
  REQUIRE(cli(w, "train-baseline -c cfg.json").code == 0);
  REQUIRE(cli(w, "eval -c cfg.json --protocol P1").code == 0);
  Json a = Json::parse(read_file(w / "out/reports/pose_P1.json"));
  REQUIRE(cli(w, "eval -c cfg.json --protocol P1 --verify").code == 0);
  Json b = Json::parse(read_file(w / "out/reports/pose_P1.json"));
  CHECK(a.contains("timestamp"));
  a.erase("timestamp");
  b.erase("timestamp");
  CHECK(a.dump() == b.dump());
  CHECK(a.at("config_hash") == parse_run_config(Json::parse(read_file(w / "cfg.json"))).hash());
  CHECK(std::isfinite(a.at("aggregate").at("mpjpe_mm").get<double>()));
  REQUIRE(cli(w, "eval -c cfg.json --protocol P3 --checkpoint out/baseline_keypoints2d").code == 0);
  CHECK(fs::exists(w / "out/reports/baseline_keypoints2d_P3.json"));

  CHECK(cli(w, "eval -c cfg.json --verify --set train.steps=5").code == 2);
  const auto interp = cli(w, "interpolate -c cfg.json --a 0 --b 3 --steps 4");
  REQUIRE(interp.code == 0);
  CHECK(fs::exists(w / ("out/interp_" + pair_file_stem(0) + "_" + pair_file_stem(3) + ".png")));
  CHECK(cli(w, "interpolate -c cfg.json --a 0 --b 99999").code == 3);
}
#endif
