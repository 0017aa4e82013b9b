#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "geomrep/losses.hpp"

namespace geomrep {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int coordinates = 0;
  /// Coordinates left out because the perturbation flipped an activation.
  int skipped_kinks = 0;
  std::vector<std::pair<std::string, double>> per_param;
};

using KinkSignature = std::function<std::vector<bool>()>;

/// Central differences on up to `per_param` coordinates of every tensor.
/// Error per tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
inline GradCheckResult check_gradients(const nn::ParamList<double>& params, const std::function<double()>& loss,
                                       const std::function<void()>& backward, double step = 1e-3,
                                       int per_param = 16, std::uint64_t seed = 7,
                                       const KinkSignature& signature = {}) {
  for (auto* p : params) p->zero_grad();
  backward();
  const std::vector<bool> base = signature ? signature() : std::vector<bool>{};
  std::mt19937_64 rng(seed);
  GradCheckResult out;
  for (auto* p : params) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p->size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(per_param)));
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto i : idx) {
      const double saved = p->value(i);
      p->value(i) = saved + step;
      const double up = loss();
      const bool flip_up = signature && signature() != base;
      p->value(i) = saved - step;
      const double down = loss();
      const bool flip_down = signature && signature() != base;
      p->value(i) = saved;
      if (flip_up || flip_down) {
        ++out.skipped_kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad(i);
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
      ++out.coordinates;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    out.per_param.emplace_back(p->name, rel);
    if (rel >= out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_param = p->name;
    }
  }
  return out;
}



/// Signs of every hidden activation of both generators on `batch`.
template <typename T>
std::vector<bool> activation_signature(const BidirectionalModel<T>& model, const PairBatch<T>& batch) {
  std::vector<bool> out;
  auto collect = [&](const nn::Mat<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > T(0));
  };
  for (const auto* g : {&model.fwd, &model.bwd}) {
    const auto& src = g == &model.fwd ? batch.source : batch.target;
    const auto& rot = g == &model.fwd ? batch.rot_ij : batch.rot_ji;
    typename Generator<T>::EncodeCache ec;
    typename Generator<T>::DecodeCache dc;
    const auto code = g->encode(src, &ec);
    for (std::size_t i = 1; i < ec.acts.size(); ++i) collect(ec.acts[i].data);
    g->decode(rotate_rows(code, rot), &dc);
    for (const auto& a : dc.acts) collect(a.data);
  }
  return out;
}

}  // namespace geomrep
