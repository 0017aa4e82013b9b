#include <doctest.h>

#include <algorithm>
#include <random>

#include "geomrep/gradcheck.hpp"
#include "geomrep/losses.hpp"

using namespace geomrep;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.map_size = 16;
  c.widths = {4, 8};
  c.latent_points = 4;
  return c;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  std::uniform_real_distribution<double> a(-kPi, kPi);
  return Rotation3::about_axis(axis.normalized(), a(rng)).matrix();
}

PairBatch<double> random_batch(int n, int size, std::uint64_t seed) {
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

GradCheckResult check_total(const LossWeights& w) {
  BidirectionalModel<double> model(tiny_config(), 3);
  const auto batch = random_batch(2, 16, 11);
  return check_gradients(
      model.params(), [&] { return total_loss(model, batch, w, false).total; },
      [&] { total_loss(model, batch, w, true); }, 1e-3, 24, 7,
      [&] { return activation_signature(model, batch); });
}

LatentCode random_code(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  LatentCode g;
  g.points.resize(m, 3);
  for (int i = 0; i < m; ++i) g.points.row(i) << n(rng), n(rng), n(rng);
  return g;
}

}  // namespace

TEST_CASE("reconstruction gradient matches central differences") {
  const auto r = check_total({1.0, 1.0, 0.0});
  INFO(r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
  CHECK(r.skipped_kinks * 4 < r.coordinates);
}

TEST_CASE("consistency gradient matches central differences") {
  const auto r = check_total({0.0, 0.0, 1.0});
  INFO(r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
  CHECK(r.skipped_kinks * 4 < r.coordinates);
}

TEST_CASE("total loss gradient matches central differences") {
  const auto r = check_total({1.0, 0.7, 0.3});
  INFO(r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
  CHECK(r.skipped_kinks * 4 < r.coordinates);
}

TEST_CASE("total loss is additive and linear in its weights") {
  BidirectionalModel<double> model(tiny_config(), 5);
  const auto batch = random_batch(3, 16, 2);
  const auto parts = total_loss(model, batch, {1.0, 1.0, 1.0}, false);
  CHECK(parts.total == doctest::Approx(parts.recon_fwd + parts.recon_bwd + parts.consistency).epsilon(1e-15));
  CHECK(total_loss(model, batch, {0.0, 0.0, 0.0}, false).total == 0.0);
  const auto scaled = total_loss(model, batch, {2.0, 3.0, 0.5}, false);
  CHECK(scaled.total == doctest::Approx(2 * parts.recon_fwd + 3 * parts.recon_bwd + 0.5 * parts.consistency));
  CHECK(parts.total > 0.0);
}

TEST_CASE("reconstruction loss fixtures") {
  SkeletonMap target(2, 3, 3);
  target.at(0, 1, 1) = 1.0f;
  target.at(1, 0, 2) = 1.0f;
  CHECK(reconstruction_loss(target, target) == 0.0);
  SkeletonMap half(2, 3, 3, false);
  std::fill(half.data.begin(), half.data.end(), 0.5f);
  CHECK(reconstruction_loss(half, target) == 0.25);
  CHECK_THROWS_AS(reconstruction_loss(SkeletonMap(1, 3, 3), target), Error);
}

TEST_CASE("consistency loss fixtures") {
  const auto g = random_code(8, 1);
  const auto h = random_code(8, 2);
  CHECK(consistency_loss(g, g) == doctest::Approx(0.0).epsilon(1e-12));
  LatentCode scaled{g.points * 3.7};
  CHECK(consistency_loss(scaled, h) == doctest::Approx(consistency_loss(g, h)).epsilon(1e-12));
  CHECK(consistency_loss(g, h) == doctest::Approx(consistency_loss(h, g)).epsilon(1e-12));
  LatentCode zero{PointsMatrix3::Zero(8, 3)};
  try {
    consistency_loss(zero, h);
    FAIL("expected a degenerate-latent error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateLatent);
  }
}

TEST_CASE("normalize_latent properties") {
  const auto g = random_code(16, 4);
  const auto n = normalize_latent(g);
  CHECK(n.points.colwise().mean().norm() < 1e-12);
  CHECK(std::sqrt(n.points.squaredNorm() / 16.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((normalize_latent(n).points - n.points).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((normalize_latent(LatentCode{g.points * 0.01}).points - n.points).cwiseAbs().maxCoeff() < 1e-9);
  std::mt19937_64 rng(9);
  const Rotation3 r = Rotation3::from_matrix(random_rotation(rng));
  const auto a = normalize_latent(rotate_latent(g, r));
  const auto b = rotate_latent(normalize_latent(g), r);
  CHECK((a.points - b.points).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rotate_latent is linear and norm preserving") {
  const auto g = random_code(10, 6);
  std::mt19937_64 rng(3);
  const Rotation3 r1 = Rotation3::from_matrix(random_rotation(rng));
  const Rotation3 r2 = Rotation3::from_matrix(random_rotation(rng));
  CHECK((rotate_latent(g, Rotation3::identity()).points - g.points).norm() == 0.0);
  const auto twice = rotate_latent(rotate_latent(g, r1), r2);
  const auto once = rotate_latent(g, r2 * r1);
  CHECK((twice.points - once.points).cwiseAbs().maxCoeff() < 1e-9);
  const auto rg = rotate_latent(g, r1);
  for (int i = 0; i < g.size(); ++i) {
    const Eigen::Vector3d direct = r1.matrix() * g.points.row(i).transpose();
    CHECK((rg.points.row(i).transpose() - direct).norm() < 1e-12);
    CHECK(rg.points.row(i).norm() == doctest::Approx(g.points.row(i).norm()).epsilon(1e-9));
  }
}

TEST_CASE("encode and decode shapes, range and determinism") {
  GeneratorConfig cfg = tiny_config();
  cfg.map_size = 64;
  cfg.widths = {4, 4, 4, 4};
  Generator<float> g(cfg, "g", 1);
  SkeletonMap s(15, 64, 64);
  s.at(3, 10, 10) = 1.0f;
  const auto code = encode(g, s);
  CHECK(code.points.rows() == 4);
  CHECK(code.points.cols() == 3);
  CHECK((encode(g, s).points - code.points).norm() == 0.0);
  const auto out = decode(g, code);
  CHECK(out.channels == 15);
  CHECK(out.height == 64);
  CHECK(out.width == 64);
  const auto [lo, hi] = std::minmax_element(out.data.begin(), out.data.end());
  CHECK(*lo > 0.0f);
  CHECK(*hi < 1.0f);
  CHECK(decode(g, code) == out);
  CHECK_THROWS_AS(decode(g, random_code(5, 1)), Error);
  CHECK_THROWS_AS(encode(g, SkeletonMap(15, 32, 32)), Error);
}

TEST_CASE("regressor and prior injection contracts") {
  RegressorConfig rc;
  rc.input_dim = 12;
  PoseRegressor<float> reg(rc, 1);
  for (auto* p : reg.params()) p->value.setZero();
  const auto pose = regress_pose(reg, random_code(4, 1));
  CHECK(pose.joints.rows() == 16);
  CHECK(pose.joints.cols() == 3);
  CHECK(pose.joints.norm() == 0.0);
  CHECK(pose.frame == Frame::kRootRelative);
  CHECK_THROWS_AS(regress_pose(reg, random_code(5, 1)), Error);

  RegressorConfig bc;
  bc.input_dim = 32;
  bc.prior_dim = 12;
  bc.hidden = 6;
  PoseRegressor<float> base(bc, 2);
  const auto g = random_code(4, 3);
  Eigen::VectorXd feats(6);
  feats << 1, -2, 3, 0.5, 0, 7;
  base.adapter().weight.value.setZero();
  base.adapter().bias.value.setZero();
  CHECK((inject_prior(base, g, feats) - feats).norm() == 0.0);
  PoseRegressor<float> base2(bc, 2);
  const Eigen::VectorXd adapted = inject_prior(base2, g, Eigen::VectorXd::Zero(6));
  const Eigen::VectorXd again = inject_prior(base2, g, feats);
  CHECK((again - adapted - feats).cwiseAbs().maxCoeff() < 1e-5);
  CHECK_THROWS_AS(inject_prior(base2, g, Eigen::VectorXd::Zero(5)), Error);
}
