#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "geomrep/geometry.hpp"
#include "geomrep/json_io.hpp"
#include "geomrep/nn.hpp"
#include "geomrep/skeleton.hpp"

namespace geomrep {

/// M rotatable latent points (rows are x, y, z).
struct LatentCode {
  PointsMatrix3 points;
  int size() const { return static_cast<int>(points.rows()); }
};

struct GeneratorConfig {
  int map_channels = 15;
  int map_size = 64;
  /// Channel widths of the stride-2 encoder blocks; the decoder mirrors them.
  std::vector<int> widths{32, 64, 128, 256};
  int latent_points = 128;
  double leaky_slope = 0.2;
  /// Initial bias of the logistic output layer (sparse targets).
  double output_bias_init = -3.0;

  int bottleneck() const { return map_size >> widths.size(); }
  int latent_dim() const { return 3 * latent_points; }
  void validate() const;
};

Json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const Json& j);

/// Skipless convolutional encoder-decoder with a 3D-point bottleneck.
template <typename T>
class Generator {
 public:
  using Mat = nn::Mat<T>;
  using Map = nn::FeatureMap<T>;

  struct EncodeCache {
    std::vector<Map> acts;  // acts[0] is the input; acts[i+1] the output of block i
    std::vector<Mat> cols;
    Mat flat;
  };
  struct DecodeCache {
    Mat latent;
    std::vector<Map> acts;  // inputs of each transposed conv (post-ReLU)
    Map output;
  };

  Generator() = default;
  Generator(const GeneratorConfig& cfg, const std::string& prefix, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    const int L = static_cast<int>(cfg.widths.size());
    const int b = cfg.bottleneck();
    int in = cfg.map_channels;
    for (int i = 0; i < L; ++i) {
      enc_conv_.emplace_back(prefix + ".enc.conv" + std::to_string(i), in, cfg.widths[i], 4, 2, 1);
      in = cfg.widths[i];
    }
    enc_fc_ = nn::Dense<T>(prefix + ".enc.fc", in * b * b, cfg.latent_dim());
    dec_fc_ = nn::Dense<T>(prefix + ".dec.fc", cfg.latent_dim(), in * b * b);
    for (int i = L - 1; i >= 0; --i) {
      const int out = i == 0 ? cfg.map_channels : cfg.widths[i - 1];
      dec_conv_.emplace_back(prefix + ".dec.deconv" + std::to_string(L - 1 - i), cfg.widths[i], out, 4, 2, 1);
    }

    std::mt19937_64 rng(seed);
    for (auto& c : enc_conv_) nn::init_uniform(c.weight, c.fan_in(), 6.0, rng);
    nn::init_uniform(enc_fc_.weight, enc_fc_.in_, 3.0, rng);
    nn::init_uniform(dec_fc_.weight, dec_fc_.in_, 6.0, rng);
    for (std::size_t i = 0; i < dec_conv_.size(); ++i) {
      const bool last = i + 1 == dec_conv_.size();
      nn::init_uniform(dec_conv_[i].weight, dec_conv_[i].fan_in(), last ? 3.0 : 6.0, rng);
    }
    dec_conv_.back().bias.value.setConstant(static_cast<T>(cfg.output_bias_init));
  }

  const GeneratorConfig& config() const { return cfg_; }

  /// Maps (C x N*H*W) skeleton maps to (N x 3M) latent rows.
  Mat encode(const Map& maps, EncodeCache* cache) const {
    check_maps(maps);
    EncodeCache local;
    EncodeCache& c = cache ? *cache : local;
    c.acts.assign(1, maps);
    c.cols.resize(enc_conv_.size());
    for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
      Map y = enc_conv_[i].forward(c.acts.back(), c.cols[i]);
      nn::leaky_relu_inplace(y.data, static_cast<T>(cfg_.leaky_slope));
      c.acts.push_back(std::move(y));
    }
    c.flat = nn::to_rows(c.acts.back());
    Mat latent = enc_fc_.forward(c.flat);
    if (!cache) return latent;
    c.acts.front() = Map();  // the input itself is not needed for backward
    c.acts.front().batch = maps.batch;
    c.acts.front().channels = maps.channels;
    c.acts.front().height = maps.height;
    c.acts.front().width = maps.width;
    return latent;
  }

  void encode_backward(const Mat& dlatent, EncodeCache& c) {
    Mat dflat = enc_fc_.backward(dlatent, c.flat);
    const int L = static_cast<int>(enc_conv_.size());
    const int b = cfg_.bottleneck();
    Map d = nn::from_rows(dflat, cfg_.widths.back(), b, b);
    for (int i = L - 1; i >= 0; --i) {
      nn::leaky_relu_backward(d.data, c.acts[static_cast<std::size_t>(i + 1)].data,
                              static_cast<T>(cfg_.leaky_slope));
      if (i == 0) {
        conv_weight_grad_only(enc_conv_[0], d, c.cols[0]);
      } else {
        d = enc_conv_[static_cast<std::size_t>(i)].backward(d, c.cols[static_cast<std::size_t>(i)],
                                                           c.acts[static_cast<std::size_t>(i)]);
      }
    }
  }

  /// Maps (N x 3M) latent rows to (C x N*H*W) maps in (0, 1).
  Map decode(const Mat& latent, DecodeCache* cache) const {
    if (latent.cols() != cfg_.latent_dim()) {
      throw Error(ErrorKind::kShapeMismatch, "latent width does not match 3M");
    }
    DecodeCache local;
    DecodeCache& c = cache ? *cache : local;
    c.latent = latent;
    Mat h = dec_fc_.forward(latent);
    nn::relu_inplace(h);
    const int b = cfg_.bottleneck();
    c.acts.clear();
    c.acts.push_back(nn::from_rows(h, cfg_.widths.back(), b, b));
    for (std::size_t i = 0; i < dec_conv_.size(); ++i) {
      Map y = dec_conv_[i].forward(c.acts.back());
      if (i + 1 == dec_conv_.size()) {
        nn::sigmoid_inplace(y.data);
        c.output = std::move(y);
      } else {
        nn::relu_inplace(y.data);
        c.acts.push_back(std::move(y));
      }
    }
    return c.output;
  }

  /// Returns d(loss)/d(latent) given d(loss)/d(output).
  Mat decode_backward(const Map& doutput, DecodeCache& c) {
    Map d = doutput;
    nn::sigmoid_backward(d.data, c.output.data);
    for (int i = static_cast<int>(dec_conv_.size()) - 1; i >= 0; --i) {
      const auto& x = c.acts[static_cast<std::size_t>(i)];
      d = dec_conv_[static_cast<std::size_t>(i)].backward(d, x);
      nn::relu_backward(d.data, x.data);
    }
    return dec_fc_.backward(nn::to_rows(d), c.latent);
  }

  nn::ParamList<T> encoder_params() {
    nn::ParamList<T> out;
    for (auto& c : enc_conv_) out.insert(out.end(), {&c.weight, &c.bias});
    out.insert(out.end(), {&enc_fc_.weight, &enc_fc_.bias});
    return out;
  }
  nn::ParamList<T> decoder_params() {
    nn::ParamList<T> out{&dec_fc_.weight, &dec_fc_.bias};
    for (auto& c : dec_conv_) out.insert(out.end(), {&c.weight, &c.bias});
    return out;
  }
  nn::ParamList<T> params() {
    auto out = encoder_params();
    auto dec = decoder_params();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }
  std::vector<const nn::Param<T>*> params() const {
    std::vector<const nn::Param<T>*> out;
    for (auto* p : const_cast<Generator*>(this)->params()) out.push_back(p);
    return out;
  }

 private:
  void check_maps(const Map& maps) const {
    if (maps.channels != cfg_.map_channels || maps.height != cfg_.map_size ||
        maps.width != cfg_.map_size) {
      throw Error(ErrorKind::kShapeMismatch, "skeleton maps do not match the generator input shape");
    }
  }

  static void conv_weight_grad_only(nn::Conv2d<T>& conv, const Map& dy, const Mat& cols) {
    conv.weight.grad_matrix(conv.out_, conv.in_ * conv.k_ * conv.k_).noalias() += dy.data * cols.transpose();
    conv.bias.grad += dy.data.rowwise().sum();
  }

  GeneratorConfig cfg_;
  std::vector<nn::Conv2d<T>> enc_conv_;
  nn::Dense<T> enc_fc_;
  nn::Dense<T> dec_fc_;
  std::vector<nn::ConvTranspose2d<T>> dec_conv_;
};

/// Packs skeleton maps into the channel-major batch layout.
template <typename T>
nn::FeatureMap<T> batch_maps(const std::vector<const SkeletonMap*>& maps) {
  const SkeletonMap& first = *maps.front();
  nn::FeatureMap<T> fm(first.channels, static_cast<int>(maps.size()), first.height, first.width);
  const Eigen::Index hw = Eigen::Index(first.height) * first.width;
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (!maps[n]->same_shape(first)) throw Error(ErrorKind::kShapeMismatch, "batch maps differ in shape");
    for (int c = 0; c < first.channels; ++c) {
      for (Eigen::Index i = 0; i < hw; ++i) {
        fm.data(c, Eigen::Index(n) * hw + i) = static_cast<T>(maps[n]->data[c * hw + i]);
      }
    }
  }
  return fm;
}

template <typename T>
SkeletonMap unbatch_map(const nn::FeatureMap<T>& fm, int n) {
  SkeletonMap m(fm.channels, fm.height, fm.width, false);
  const Eigen::Index hw = Eigen::Index(fm.height) * fm.width;
  for (int c = 0; c < fm.channels; ++c) {
    for (Eigen::Index i = 0; i < hw; ++i) m.data[c * hw + i] = static_cast<float>(fm.data(c, n * hw + i));
  }
  return m;
}

struct RegressorConfig {
  int input_dim = 384;
  int hidden = 1024;
  int output_dim = 48;
  /// Width of the injected prior (3M); 0 disables the adapter.
  int prior_dim = 0;
  double output_scale_mm = 1000.0;
};

Json to_json(const RegressorConfig& c);
RegressorConfig regressor_config_from_json(const Json& j);

/// Two affine layers (input -> hidden -> output) with ReLU. With a prior,
/// adapter(prior) is summed element-wise into the hidden pre-activation.
template <typename T>
class PoseRegressor {
 public:
  using Mat = nn::Mat<T>;

  struct Cache {
    Mat x;
    Mat prior;
    Mat hidden;
  };

  PoseRegressor() = default;
  PoseRegressor(const RegressorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    fc1_ = nn::Dense<T>("reg.fc1", cfg.input_dim, cfg.hidden);
    fc2_ = nn::Dense<T>("reg.fc2", cfg.hidden, cfg.output_dim);
    input_shift = nn::Param<T>("reg.input_shift", {cfg.input_dim});
    input_scale = nn::Param<T>("reg.input_scale", {cfg.input_dim});
    input_scale.value.setOnes();
    std::mt19937_64 rng(seed);
    nn::init_uniform(fc1_.weight, cfg.input_dim, 6.0, rng);
    nn::init_uniform(fc2_.weight, cfg.hidden, 3.0, rng);
    if (cfg.prior_dim > 0) {
      adapter_ = nn::Dense<T>("reg.adapter", cfg.prior_dim, cfg.hidden);
      prior_shift = nn::Param<T>("reg.prior_shift", {cfg.prior_dim});
      prior_scale = nn::Param<T>("reg.prior_scale", {cfg.prior_dim});
      prior_scale.value.setOnes();
      nn::init_uniform(adapter_.weight, cfg.prior_dim, 6.0, rng);
    }
  }

  const RegressorConfig& config() const { return cfg_; }

  /// Sets the standardization buffers from training inputs.
  void fit_standardization(const Mat& x, const Mat* prior) {
    fit(x, input_shift, input_scale);
    if (prior && cfg_.prior_dim > 0) fit(*prior, prior_shift, prior_scale);
  }

  /// Hidden-layer sum of the baseline feature path and the adapter path.
  Mat features(const Mat& x, const Mat* prior, Cache* cache) const {
    Mat xs = standardize(x, input_shift, input_scale);
    Mat z = fc1_.forward(xs);
    Mat ps;
    if (cfg_.prior_dim > 0) {
      if (!prior) throw Error(ErrorKind::kShapeMismatch, "regressor expects a prior input");
      ps = standardize(*prior, prior_shift, prior_scale);
      z += adapter_.forward(ps);
    }
    if (cache) {
      cache->x = std::move(xs);
      cache->prior = std::move(ps);
    }
    return z;
  }

  /// Predictions in mm, (N x output_dim).
  Mat forward(const Mat& x, const Mat* prior, Cache* cache) const {
    Mat h = features(x, prior, cache);
    nn::relu_inplace(h);
    Mat y = fc2_.forward(h) * static_cast<T>(cfg_.output_scale_mm);
    if (cache) cache->hidden = std::move(h);
    return y;
  }

  /// d(loss)/d(prediction in mm) -> parameter gradients.
  void backward(const Mat& dy_mm, Cache& c) {
    Mat dh = fc2_.backward(dy_mm * static_cast<T>(cfg_.output_scale_mm), c.hidden);
    nn::relu_backward(dh, c.hidden);
    fc1_.backward(dh, c.x);
    if (cfg_.prior_dim > 0) adapter_.backward(dh, c.prior);
  }

  /// adapter(prior) + baseline_features, element-wise.
  Mat inject(const Mat& prior, const Mat& baseline_features) const {
    if (cfg_.prior_dim == 0) throw Error(ErrorKind::kShapeMismatch, "regressor has no prior adapter");
    if (baseline_features.cols() != cfg_.hidden) {
      throw Error(ErrorKind::kShapeMismatch, "baseline feature width does not match the adapter output");
    }
    return adapter_.forward(standardize(prior, prior_shift, prior_scale)) + baseline_features;
  }

  nn::ParamList<T> params() {
    nn::ParamList<T> out{&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias};
    if (cfg_.prior_dim > 0) out.insert(out.end(), {&adapter_.weight, &adapter_.bias});
    return out;
  }
  nn::ParamList<T> buffers() {
    nn::ParamList<T> out{&input_shift, &input_scale};
    if (cfg_.prior_dim > 0) out.insert(out.end(), {&prior_shift, &prior_scale});
    return out;
  }
  nn::Dense<T>& adapter() { return adapter_; }

  nn::Param<T> input_shift, input_scale, prior_shift, prior_scale;

 private:
  static Mat standardize(const Mat& x, const nn::Param<T>& shift, const nn::Param<T>& scale) {
    if (x.cols() != shift.size()) throw Error(ErrorKind::kShapeMismatch, "regressor input width mismatch");
    Mat out = x.rowwise() - shift.value.transpose();
    return out.array().rowwise() * scale.value.transpose().array();
  }
  static void fit(const Mat& x, nn::Param<T>& shift, nn::Param<T>& scale) {
    const auto mean = x.colwise().mean();
    shift.value = mean.transpose();
    const Mat centered = x.rowwise() - mean;
    const auto var = centered.colwise().squaredNorm() / static_cast<T>(std::max<Eigen::Index>(1, x.rows()));
    scale.value = var.transpose().unaryExpr([](T v) { return T(1) / std::sqrt(v + T(1e-6)); });
  }

  RegressorConfig cfg_;
  nn::Dense<T> fc1_;
  nn::Dense<T> fc2_;
  nn::Dense<T> adapter_;
};

// Single-sample, double-precision API over float parameters.

LatentCode encode(const Generator<float>& g, const SkeletonMap& s);
SkeletonMap decode(const Generator<float>& g, const LatentCode& code);
LatentCode rotate_latent(const LatentCode& g, const Rotation3& r);
/// Zero centroid, unit RMS point norm. Throws kDegenerateLatent when the
/// code has no spread.
LatentCode normalize_latent(const LatentCode& g);
Pose3D regress_pose(const PoseRegressor<float>& reg, const LatentCode& g);
Eigen::VectorXd inject_prior(const PoseRegressor<float>& reg, const LatentCode& g,
                             const Eigen::VectorXd& baseline_features);

/// (N x 3M) rows <-> LatentCode.
template <typename T>
LatentCode latent_from_row(const nn::Mat<T>& rows, Eigen::Index n) {
  LatentCode g;
  const Eigen::Index m = rows.cols() / 3;
  g.points.resize(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int a = 0; a < 3; ++a) g.points(i, a) = static_cast<double>(rows(n, 3 * i + a));
  }
  return g;
}

template <typename T>
nn::Mat<T> latent_to_rows(const std::vector<LatentCode>& codes) {
  const Eigen::Index m = codes.front().points.rows();
  nn::Mat<T> out(static_cast<Eigen::Index>(codes.size()), 3 * m);
  for (std::size_t n = 0; n < codes.size(); ++n) {
    if (codes[n].points.rows() != m) throw Error(ErrorKind::kShapeMismatch, "latent sizes differ");
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int a = 0; a < 3; ++a) out(Eigen::Index(n), 3 * i + a) = static_cast<T>(codes[n].points(i, a));
    }
  }
  return out;
}

/// Named parameter tensors in GART files plus a JSON manifest.
void save_params(const std::filesystem::path& dir, const std::vector<const nn::Param<float>*>& params);
void load_params(const std::filesystem::path& dir, const nn::ParamList<float>& params);

template <typename T>
std::vector<const nn::Param<T>*> const_params(const nn::ParamList<T>& ps) {
  return {ps.begin(), ps.end()};
}

}  // namespace geomrep
