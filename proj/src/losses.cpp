#include "geomrep/losses.hpp"

namespace geomrep {

void LossWeights::validate() const {
  for (double w : {w_recon_fwd, w_recon_bwd, w_consistency}) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorKind::kConfig, "loss weights must be finite and >= 0");
  }
}

Json to_json(const LossWeights& w) {
  return Json{{"w_recon_fwd", w.w_recon_fwd}, {"w_recon_bwd", w.w_recon_bwd}, {"w_consistency", w.w_consistency}};
}

double reconstruction_loss(const SkeletonMap& pred, const SkeletonMap& target) {
  if (!pred.same_shape(target)) throw Error(ErrorKind::kShapeMismatch, "prediction and target maps differ in shape");
  if (pred.data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(pred.data.size());
}

double consistency_loss(const LatentCode& g_ij, const LatentCode& g_j) {
  if (g_ij.size() != g_j.size()) throw Error(ErrorKind::kShapeMismatch, "latent codes differ in size");
  const auto a = normalize_latent(g_ij);
  const auto b = normalize_latent(g_j);
  return (a.points - b.points).squaredNorm();
}

}  // namespace geomrep
