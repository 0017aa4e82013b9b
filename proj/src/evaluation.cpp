#include "geomrep/evaluation.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "geomrep/tensor_io.hpp"

namespace geomrep {

namespace fs = std::filesystem;

namespace {

PointsMatrix3 root_relative(const Pose3D& p, int root) {
  if (root < 0 || root >= p.num_joints()) throw Error(ErrorKind::kShapeMismatch, "root joint out of range");
  return p.joints.rowwise() - p.joints.row(root);
}

void check_pair(const Pose3D& pred, const Pose3D& gt) {
  if (pred.frame != gt.frame) throw Error(ErrorKind::kFrameMismatch, "prediction and ground truth frames differ");
  if (pred.num_joints() != gt.num_joints() || gt.num_joints() == 0) {
    throw Error(ErrorKind::kShapeMismatch, "prediction and ground truth joint counts differ");
  }
}

SubsetMetrics summarize(const std::string& name, const std::vector<const SampleRecord*>& records,
                        const std::vector<double>& joint_errs) {
  SubsetMetrics s;
  s.name = name;
  s.count = static_cast<std::int64_t>(records.size());
  if (records.empty()) return s;
  for (const auto* r : records) {
    s.mpjpe += r->mpjpe;
    s.pmpjpe += r->pmpjpe;
  }
  s.mpjpe /= static_cast<double>(records.size());
  s.pmpjpe /= static_cast<double>(records.size());
  const PckAuc pa = pck_auc(joint_errs);
  s.pck = pa.pck;
  s.auc = pa.auc;
  return s;
}

Json to_json(const SubsetMetrics& s) {
  return Json{{"name", s.name}, {"count", s.count}, {"mpjpe_mm", s.mpjpe},
              {"pmpjpe_mm", s.pmpjpe}, {"pck_percent", s.pck}, {"auc", s.auc}};
}

}  // namespace

std::vector<double> joint_errors(const Pose3D& pred, const Pose3D& gt, int root) {
  check_pair(pred, gt);
  const PointsMatrix3 a = root_relative(pred, root);
  const PointsMatrix3 b = root_relative(gt, root);
  std::vector<double> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index j = 0; j < a.rows(); ++j) out[static_cast<std::size_t>(j)] = (a.row(j) - b.row(j)).norm();
  return out;
}

double mpjpe(const Pose3D& pred, const Pose3D& gt, int root) {
  const auto e = joint_errors(pred, gt, root);
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

double pmpjpe(const Pose3D& pred, const Pose3D& gt, int root) {
  check_pair(pred, gt);
  Pose3D a{root_relative(pred, root), pred.frame};
  Pose3D b{root_relative(gt, root), gt.frame};
  const Alignment al = procrustes_align(a, b, true);
  return mean_joint_distance(al.aligned.joints, b.joints);
}

PckAuc pck_auc(const std::vector<double>& errors_mm, double threshold_mm, int n_thresholds) {
  if (errors_mm.empty()) throw Error(ErrorKind::kShapeMismatch, "no joint errors to score");
  if (!(threshold_mm > 0.0) || n_thresholds < 2) {
    throw Error(ErrorKind::kConfig, "PCK needs a positive threshold and at least 2 grid points");
  }
  for (double e : errors_mm) {
    if (!std::isfinite(e)) throw Error(ErrorKind::kNonFinite, "joint error is not finite");
  }
  std::vector<double> sorted = errors_mm;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto fraction_within = [&](double t) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin()) / n;
  };
  PckAuc out;
  out.pck = 100.0 * fraction_within(threshold_mm);
  for (int k = 0; k < n_thresholds; ++k) {
    out.auc += fraction_within(threshold_mm * k / (n_thresholds - 1));
  }
  out.auc /= n_thresholds;
  return out;
}

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kP1: return "P1";
    case Protocol::kP2: return "P2";
    case Protocol::kP3: return "P3";
  }
  return "P1";
}

Protocol protocol_from_string(const std::string& s) {
  for (auto p : {Protocol::kP1, Protocol::kP2, Protocol::kP3}) {
    if (s == to_string(p)) return p;
  }
  throw Error(ErrorKind::kConfig, "unknown protocol '" + s + "' (expected P1, P2 or P3)");
}

double EvalReport::primary() const { return protocol == Protocol::kP2 ? aggregate.pmpjpe : aggregate.mpjpe; }

Json to_json(const EvalReport& r) {
  Json fam = Json::array();
  for (const auto& f : r.per_family) fam.push_back(to_json(f));
  Json samples = Json::array();
  for (const auto& s : r.samples) {
    samples.push_back(Json{{"id", s.id}, {"subject", s.subject}, {"family", s.family},
                           {"cam", s.cam}, {"mpjpe_mm", s.mpjpe}, {"pmpjpe_mm", s.pmpjpe}});
  }
  return Json{{"protocol", to_string(r.protocol)},
              {"primary_metric", r.protocol == Protocol::kP2 ? "pmpjpe_mm" : "mpjpe_mm"},
              {"primary", r.primary()},
              {"aggregate", to_json(r.aggregate)},
              {"per_family", fam},
              {"samples", samples},
              {"config_hash", r.config_hash},
              {"checkpoint_id", r.checkpoint_id},
              {"seeds", r.seeds}};
}

std::vector<std::size_t> protocol_samples(const Dataset& data, Protocol protocol) {
  const auto& m = data.manifest;
  if (m.test_subjects.empty()) throw Error(ErrorKind::kMissingInput, "dataset has no test-subject split");
  std::vector<int> held_out;
  if (protocol == Protocol::kP3) {
    for (int c = 0; c < m.n_viewpoints; ++c) {
      if (std::find(m.train_cameras.begin(), m.train_cameras.end(), c) == m.train_cameras.end()) held_out.push_back(c);
    }
    if (m.train_cameras.empty() || held_out.empty()) {
      throw Error(ErrorKind::kMissingInput, "dataset has no held-out camera view for P3");
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const PairMeta& p = data.pairs[i].meta;
    if (p.is_virtual) continue;
    if (std::find(m.test_subjects.begin(), m.test_subjects.end(), p.subject) == m.test_subjects.end()) continue;
    if (protocol == Protocol::kP3 && std::find(held_out.begin(), held_out.end(), p.cam_i) == held_out.end()) continue;
    out.push_back(i);
  }
  if (out.empty()) throw Error(ErrorKind::kMissingInput, "no evaluation samples for protocol " + std::string(to_string(protocol)));
  return out;
}

EvalReport make_report(const Dataset& data, const std::vector<std::size_t>& indices, const nn::Mat<float>& predictions,
                       Protocol protocol) {
  if (predictions.rows() != static_cast<Eigen::Index>(indices.size())) {
    throw Error(ErrorKind::kShapeMismatch, "one prediction row per sample is required");
  }
  const int k = data.manifest.tree.num_joints();
  const int root = data.manifest.tree.root();
  EvalReport r;
  r.protocol = protocol;
  std::vector<double> all_errs;
  std::map<int, std::vector<double>> fam_errs;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const StoredPair& p = data.pairs.at(indices[s]);
    if (!p.label) throw Error(ErrorKind::kMissingInput, "pair " + pair_file_stem(p.meta.id) + " has no 3D label");
    Pose3D gt{*p.label, Frame::kRootRelative};
    Pose3D pred{PointsMatrix3(k, 3), Frame::kRootRelative};
    for (int j = 0; j < k; ++j) {
      for (int a = 0; a < 3; ++a) pred.joints(j, a) = static_cast<double>(predictions(static_cast<Eigen::Index>(s), 3 * j + a));
    }
    SampleRecord rec{p.meta.id, p.meta.subject, p.meta.family, p.meta.cam_i, mpjpe(pred, gt, root), pmpjpe(pred, gt, root)};
    r.samples.push_back(rec);
    const auto e = joint_errors(pred, gt, root);
    all_errs.insert(all_errs.end(), e.begin(), e.end());
    auto& fe = fam_errs[p.meta.family];
    fe.insert(fe.end(), e.begin(), e.end());
  }
  std::vector<const SampleRecord*> all;
  std::map<int, std::vector<const SampleRecord*>> by_family;
  for (const auto& s : r.samples) {
    all.push_back(&s);
    by_family[s.family].push_back(&s);
  }
  r.aggregate = summarize("all", all, all_errs);
  for (const auto& [f, recs] : by_family) {
    const std::string name = f >= 0 && f < static_cast<int>(data.manifest.families.size())
                                 ? data.manifest.families[static_cast<std::size_t>(f)]
                                 : "family" + std::to_string(f);
    r.per_family.push_back(summarize(name, recs, fam_errs[f]));
  }
  return r;
}

EvalReport run_protocol(const Dataset& data, const RegressorCheckpoint& regressor, const Generator<float>* encoder,
                        Protocol protocol) {
  const nn::DenormalGuard ftz;
  const bool needs_encoder = regressor.input != RegressorInput::kKeypoints;
  if (needs_encoder && !encoder) {
    throw Error(ErrorKind::kDependencyOrder, "this regressor needs its encoder checkpoint");
  }
  const auto indices = protocol_samples(data, protocol);
  const RegressionSet set = regression_set(data, indices, needs_encoder ? encoder : nullptr, false);
  EvalReport r = make_report(data, indices, predict(regressor, set), protocol);
  r.config_hash = regressor.config_hash;
  r.seeds = {regressor.train_config.seed};
  return r;
}

double latent_residual(const BidirectionalModel<float>& model, const Dataset& data,
                       const std::vector<std::size_t>& indices) {
  const nn::DenormalGuard ftz;
  if (indices.empty()) throw Error(ErrorKind::kMissingInput, "no pairs for the latent residual");
  double sum = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t s = 0; s < indices.size(); s += kChunk) {
    std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(s),
                                 indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), s + kChunk)));
    const PairBatch<float> b = load_batch(data, idx);
    const auto a = normalize_rows(nn::Mat<double>(rotate_rows(model.fwd.encode(b.source, nullptr), b.rot_ij).cast<double>()));
    const auto c = normalize_rows(nn::Mat<double>(model.bwd.encode(b.target, nullptr).cast<double>()));
    const double m = static_cast<double>(a.normalized.cols() / 3);
    sum += (a.normalized - c.normalized).rowwise().squaredNorm().sum() / m;
  }
  return sum / static_cast<double>(indices.size());
}

SynthesisQuality synthesis_quality(const BidirectionalModel<float>& model, const Dataset& data,
                                   const std::vector<std::size_t>& indices) {
  const nn::DenormalGuard ftz;
  if (indices.empty()) throw Error(ErrorKind::kMissingInput, "no pairs to score");
  SynthesisQuality q;
  constexpr std::size_t kChunk = 50;
  for (std::size_t s = 0; s < indices.size(); s += kChunk) {
    std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(s),
                                 indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), s + kChunk)));
    const PairBatch<float> b = load_batch(data, idx);
    const auto pj = model.fwd.decode(rotate_rows(model.fwd.encode(b.source, nullptr), b.rot_ij), nullptr);
    const auto pi = model.bwd.decode(rotate_rows(model.bwd.encode(b.target, nullptr), b.rot_ji), nullptr);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const int n = static_cast<int>(k);
      const SkeletonMap tj = unbatch_map(b.target, n), ti = unbatch_map(b.source, n);
      const SkeletonMap ej = unbatch_map(pj, n), ei = unbatch_map(pi, n);
      q.recon_fwd += reconstruction_loss(ej, tj);
      q.recon_bwd += reconstruction_loss(ei, ti);
      q.iou_fwd += skeleton_iou(ej, tj);
      q.iou_bwd += skeleton_iou(ei, ti);
    }
  }
  const double n = static_cast<double>(indices.size());
  q.recon_fwd /= n;
  q.recon_bwd /= n;
  q.iou_fwd /= n;
  q.iou_bwd /= n;
  return q;
}

std::vector<InterpolationStep> interpolate_latents(const LatentCode& a, const LatentCode& b, int steps,
                                                   const Generator<float>& decoder,
                                                   const PoseRegressor<float>* regressor) {
  const nn::DenormalGuard ftz;
  if (steps < 2) throw Error(ErrorKind::kConfig, "interpolation needs at least 2 steps");
  if (a.size() != b.size()) throw Error(ErrorKind::kShapeMismatch, "latent codes differ in point count");
  std::vector<InterpolationStep> out;
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / (steps - 1);
    InterpolationStep s;
    s.latent.points = (1.0 - t) * a.points + t * b.points;
    s.map = decode(decoder, s.latent);
    if (regressor) s.pose = regress_pose(*regressor, s.latent);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                                                 static_cast<uInt>(body.size()))));
}

std::array<std::uint8_t, 3> limb_color(int c) {
  const double hue = std::fmod(c * 0.61803398875, 1.0) * 6.0;
  const int sector = static_cast<int>(hue);
  const double f = hue - sector;
  const auto up = static_cast<std::uint8_t>(255 * f), down = static_cast<std::uint8_t>(255 * (1 - f));
  switch (sector % 6) {
    case 0: return {255, up, 0};
    case 1: return {down, 255, 0};
    case 2: return {0, 255, up};
    case 3: return {0, down, 255};
    case 4: return {up, 0, 255};
    default: return {255, 0, down};
  }
}

}  // namespace

void write_map_strip_png(const fs::path& path, const std::vector<SkeletonMap>& maps, int scale) {
  if (maps.empty()) throw Error(ErrorKind::kMissingInput, "no maps to draw");
  if (scale < 1) throw Error(ErrorKind::kConfig, "strip scale must be >= 1");
  const int h = maps.front().height, w = maps.front().width;
  constexpr int kGap = 4;
  const int n = static_cast<int>(maps.size());
  const int W = n * w * scale + (n - 1) * kGap, H = h * scale;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(W) * H * 3, 40);
  for (int i = 0; i < n; ++i) {
    const SkeletonMap& m = maps[static_cast<std::size_t>(i)];
    if (m.height != h || m.width != w) throw Error(ErrorKind::kShapeMismatch, "strip maps differ in size");
    const int x0 = i * (w * scale + kGap);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::array<double, 3> px{0, 0, 0};
        for (int c = 0; c < m.channels; ++c) {
          const double v = std::clamp(static_cast<double>(m.at(c, y, x)), 0.0, 1.0);
          const auto col = limb_color(c);
          for (int a = 0; a < 3; ++a) px[static_cast<std::size_t>(a)] = std::max(px[static_cast<std::size_t>(a)], v * col[static_cast<std::size_t>(a)]);
        }
        for (int sy = 0; sy < scale; ++sy) {
          for (int sx = 0; sx < scale; ++sx) {
            const std::size_t o = (static_cast<std::size_t>(y * scale + sy) * W + x0 + x * scale + sx) * 3;
            for (int a = 0; a < 3; ++a) rgb[o + static_cast<std::size_t>(a)] = static_cast<std::uint8_t>(px[static_cast<std::size_t>(a)]);
          }
        }
      }
    }
  }
  std::string raw;
  raw.reserve(static_cast<std::size_t>(H) * (W * 3 + 1));
  for (int y = 0; y < H; ++y) {
    raw.push_back(0);
    raw.append(reinterpret_cast<const char*>(rgb.data() + static_cast<std::size_t>(y) * W * 3), static_cast<std::size_t>(W) * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
               static_cast<uLong>(raw.size())) != Z_OK) {
    throw Error(ErrorKind::kIo, "PNG compression failed");
  }
  z.resize(zlen);
  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(W));
  put_be32(ihdr, static_cast<std::uint32_t>(H));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", "");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, png);
}

}  // namespace geomrep
