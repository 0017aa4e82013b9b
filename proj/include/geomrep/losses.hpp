#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "geomrep/model.hpp"

namespace geomrep {

struct LossWeights {
  double w_recon_fwd = 1.0;
  double w_recon_bwd = 1.0;
  double w_consistency = 1.0;

  void validate() const;
};

Json to_json(const LossWeights& w);

/// Per-pixel mean squared difference.
double reconstruction_loss(const SkeletonMap& pred, const SkeletonMap& target);

/// Sum over points of squared distance between the normalized codes.
double consistency_loss(const LatentCode& g_ij, const LatentCode& g_j);

template <typename T>
struct NormalizedRows {
  nn::Mat<T> normalized;  // N x 3M
  nn::Vec<T> scale;       // RMS point norm per row, before normalization
};

/// Row-wise: centroid removed, divided by the RMS point norm.
template <typename T>
NormalizedRows<T> normalize_rows(const nn::Mat<T>& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index m = rows.cols() / 3;
  NormalizedRows<T> out{nn::Mat<T>(n, rows.cols()), nn::Vec<T>(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>> p(rows.row(r).data(), m, 3);
    Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor> c = p.rowwise() - p.colwise().mean();
    const T s = std::sqrt(c.squaredNorm() / static_cast<T>(m));
    if (!(s > T(0)) || !std::isfinite(static_cast<double>(s))) {
      throw Error(ErrorKind::kDegenerateLatent, "latent code has no spread around its centroid");
    }
    out.scale(r) = s;
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>>(out.normalized.row(r).data(), m, 3) = c / s;
  }
  return out;
}

template <typename T>
nn::Mat<T> normalize_rows_backward(const nn::Mat<T>& dnorm, const NormalizedRows<T>& fwd) {
  const Eigen::Index m = dnorm.cols() / 3;
  nn::Mat<T> out(dnorm.rows(), dnorm.cols());
  for (Eigen::Index r = 0; r < dnorm.rows(); ++r) {
    const auto dn = dnorm.row(r);
    const auto nr = fwd.normalized.row(r);
    const T proj = dn.dot(nr) / static_cast<T>(m);
    nn::Mat<T> dc = (dn - proj * nr) / fwd.scale(r);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>> d(dc.data(), m, 3);
    d.rowwise() -= d.colwise().mean().eval();
    out.row(r) = dc;
  }
  return out;
}

/// Row n's points p become R_n p.
template <typename T>
nn::Mat<T> rotate_rows(const nn::Mat<T>& rows, const std::vector<Eigen::Matrix3d>& rots, bool transpose = false) {
  if (static_cast<Eigen::Index>(rots.size()) != rows.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "one rotation per latent row is required");
  }
  const Eigen::Index m = rows.cols() / 3;
  nn::Mat<T> out(rows.rows(), rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const Eigen::Matrix<T, 3, 3> R = rots[static_cast<std::size_t>(r)].cast<T>();
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>> p(rows.row(r).data(), m, 3);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 3, Eigen::RowMajor>> q(out.row(r).data(), m, 3);
    if (transpose) {
      q.noalias() = p * R;
    } else {
      q.noalias() = p * R.transpose();
    }
  }
  return out;
}

/// Mean squared difference over every element; optional gradient w.r.t. pred.
template <typename T>
T reconstruction_loss(const nn::FeatureMap<T>& pred, const nn::FeatureMap<T>& target, nn::FeatureMap<T>* grad) {
  if (pred.data.rows() != target.data.rows() || pred.data.cols() != target.data.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "prediction and target maps differ in shape");
  }
  const T count = static_cast<T>(pred.data.size());
  nn::Mat<T> diff = pred.data - target.data;
  const T loss = diff.squaredNorm() / count;
  if (grad) {
    *grad = pred;
    grad->data = diff * (T(2) / count);
  }
  return loss;
}

/// Batch mean of per-row consistency on already-normalized rows.
template <typename T>
T consistency_rows(const nn::Mat<T>& a, const nn::Mat<T>& b, nn::Mat<T>* da, nn::Mat<T>* db) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "latent batches differ in shape");
  }
  const T n = static_cast<T>(a.rows());
  nn::Mat<T> diff = a - b;
  if (da) *da = diff * (T(2) / n);
  if (db) *db = diff * (T(-2) / n);
  return diff.squaredNorm() / n;
}

struct LossBreakdown {
  double recon_fwd = 0.0;
  double recon_bwd = 0.0;
  double consistency = 0.0;
  double total = 0.0;
};

/// Two generators with identical architecture and independent parameters:
/// fwd maps view i to view j, bwd maps view j to view i.
template <typename T>
struct BidirectionalModel {
  Generator<T> fwd;
  Generator<T> bwd;

  BidirectionalModel() = default;
  BidirectionalModel(const GeneratorConfig& cfg, std::uint64_t seed)
      : fwd(cfg, "fwd", seed * 2 + 1), bwd(cfg, "bwd", seed * 2 + 2) {}

  nn::ParamList<T> params() {
    auto out = fwd.params();
    auto b = bwd.params();
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }
  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }
};

template <typename T>
struct PairBatch {
  nn::FeatureMap<T> source;
  nn::FeatureMap<T> target;
  std::vector<Eigen::Matrix3d> rot_ij;
  std::vector<Eigen::Matrix3d> rot_ji;
  std::vector<std::int64_t> ids;
};

/// Weighted sum of both reconstruction terms and the consistency term.
/// With `accumulate_grad` the parameter gradients are added to each
/// generator's grad buffers (callers zero them).
template <typename T>
LossBreakdown total_loss(BidirectionalModel<T>& model, const PairBatch<T>& batch, const LossWeights& w,
                         bool accumulate_grad) {
  typename Generator<T>::EncodeCache ef, eb;
  typename Generator<T>::DecodeCache df, db;

  const nn::Mat<T> g_i = model.fwd.encode(batch.source, accumulate_grad ? &ef : nullptr);
  const nn::Mat<T> g_ij = rotate_rows(g_i, batch.rot_ij);
  const nn::FeatureMap<T> pred_j = model.fwd.decode(g_ij, &df);

  const nn::Mat<T> gt_j = model.bwd.encode(batch.target, accumulate_grad ? &eb : nullptr);
  const nn::Mat<T> g_ji = rotate_rows(gt_j, batch.rot_ji);
  const nn::FeatureMap<T> pred_i = model.bwd.decode(g_ji, &db);

  nn::FeatureMap<T> dpred_j, dpred_i;
  LossBreakdown out;
  out.recon_fwd = static_cast<double>(reconstruction_loss(pred_j, batch.target, accumulate_grad ? &dpred_j : nullptr));
  out.recon_bwd = static_cast<double>(reconstruction_loss(pred_i, batch.source, accumulate_grad ? &dpred_i : nullptr));

  nn::Mat<T> dn_ij, dn_j;
  NormalizedRows<T> n_ij, n_j;
  const bool want_rc = w.w_consistency != 0.0;
  if (want_rc) {
    n_ij = normalize_rows(g_ij);
    n_j = normalize_rows(gt_j);
    out.consistency = static_cast<double>(consistency_rows(n_ij.normalized, n_j.normalized,
                                                           accumulate_grad ? &dn_ij : nullptr,
                                                           accumulate_grad ? &dn_j : nullptr));
  }
  out.total = w.w_recon_fwd * out.recon_fwd + w.w_recon_bwd * out.recon_bwd + w.w_consistency * out.consistency;
  if (!accumulate_grad) return out;

  nn::Mat<T> dg_ij = nn::Mat<T>::Zero(g_ij.rows(), g_ij.cols());
  if (w.w_recon_fwd != 0.0) {
    dpred_j.data *= static_cast<T>(w.w_recon_fwd);
    dg_ij += model.fwd.decode_backward(dpred_j, df);
  }
  nn::Mat<T> dgt_j = nn::Mat<T>::Zero(gt_j.rows(), gt_j.cols());
  if (w.w_recon_bwd != 0.0) {
    dpred_i.data *= static_cast<T>(w.w_recon_bwd);
    const nn::Mat<T> dg_ji = model.bwd.decode_backward(dpred_i, db);
    dgt_j += rotate_rows(dg_ji, batch.rot_ji, true);
  }
  if (want_rc) {
    const T wc = static_cast<T>(w.w_consistency);
    dg_ij += normalize_rows_backward<T>(dn_ij * wc, n_ij);
    dgt_j += normalize_rows_backward<T>(dn_j * wc, n_j);
  }
  model.fwd.encode_backward(rotate_rows(dg_ij, batch.rot_ij, true), ef);
  model.bwd.encode_backward(dgt_j, eb);
  return out;
}

}  // namespace geomrep
