#pragma once

// Minimal CPU layer set with hand-written backward passes. Scalar-templated:
// training runs in float, gradient checks in double.
//
// Spatial activations use a channel-major batch layout: a FeatureMap holds a
// (channels x batch*height*width) matrix, so a convolution is a single GEMM
// against the im2col expansion of the whole batch.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "geomrep/error.hpp"

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define GEOMREP_HAS_MXCSR 1
#endif

namespace geomrep::nn {

/// Flushes denormals to zero for its lifetime; restores the caller's mode.
class DenormalGuard {
 public:
#ifdef GEOMREP_HAS_MXCSR
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#else
  DenormalGuard() = default;
#endif
 public:
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Vec<T> value;
  Vec<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    Eigen::Index size = 1;
    for (int d : shape) size *= d;
    value = Vec<T>::Zero(size);
    grad = Vec<T>::Zero(size);
  }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }

  Eigen::Map<Mat<T>> as_matrix(int rows, int cols) { return {value.data(), rows, cols}; }
  Eigen::Map<const Mat<T>> as_matrix(int rows, int cols) const { return {value.data(), rows, cols}; }
  Eigen::Map<Mat<T>> grad_matrix(int rows, int cols) { return {grad.data(), rows, cols}; }
};

/// Uniform(-bound, bound) with bound = sqrt(gain / fan_in).
template <typename T>
void init_uniform(Param<T>& p, double fan_in, double gain, std::mt19937_64& rng) {
  const double bound = std::sqrt(gain / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = static_cast<T>(u(rng));
}

template <typename T>
struct FeatureMap {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  Mat<T> data;  // channels x (batch*height*width)

  FeatureMap() = default;
  FeatureMap(int c, int n, int h, int w)
      : channels(c), batch(n), height(h), width(w), data(Mat<T>::Zero(c, Eigen::Index(n) * h * w)) {}
  Eigen::Index plane() const { return Eigen::Index(batch) * height * width; }
};

struct ConvGeom {
  int channels;  // channels of the spatially larger ("image") side
  int batch;
  int in_h, in_w;  // image side
  int kernel, stride, pad;
  int out_h, out_w;  // sliding-window grid

  Eigen::Index rows() const { return Eigen::Index(channels) * kernel * kernel; }
  Eigen::Index cols() const { return Eigen::Index(batch) * out_h * out_w; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const Eigen::Index ncols = g.cols();
  const Eigen::Index plane = Eigen::Index(g.batch) * g.in_h * g.in_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((Eigen::Index(c) * g.kernel + ky) * g.kernel + kx) * ncols;
        const T* src = x + c * plane;
        for (int n = 0; n < g.batch; ++n) {
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            T* dst = row + (Eigen::Index(n) * g.out_h + oy) * g.out_w;
            if (iy < 0 || iy >= g.in_h) {
              for (int ox = 0; ox < g.out_w; ++ox) dst[ox] = T(0);
              continue;
            }
            const T* line = src + (Eigen::Index(n) * g.in_h + iy) * g.in_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.in_w) ? line[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back into the image.
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* x) {
  const Eigen::Index ncols = g.cols();
  const Eigen::Index plane = Eigen::Index(g.batch) * g.in_h * g.in_w;
  std::fill(x, x + plane * g.channels, T(0));
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((Eigen::Index(c) * g.kernel + ky) * g.kernel + kx) * ncols;
        T* dst_plane = x + c * plane;
        for (int n = 0; n < g.batch; ++n) {
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            const T* src = row + (Eigen::Index(n) * g.out_h + oy) * g.out_w;
            T* line = dst_plane + (Eigen::Index(n) * g.in_h + iy) * g.in_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.in_w) line[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

/// Strided convolution, weight (out x in*k*k).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int pad)
      : in_(in_ch), out_(out_ch), k_(kernel), s_(stride), p_(pad),
        weight(name + ".weight", {out_ch, in_ch * kernel * kernel}),
        bias(name + ".bias", {out_ch}) {}

  int out_size(int in) const { return (in + 2 * p_ - k_) / s_ + 1; }

  ConvGeom geom(const FeatureMap<T>& x) const {
    return {in_, x.batch, x.height, x.width, k_, s_, p_, out_size(x.height), out_size(x.width)};
  }

  /// `cols` receives the im2col buffer needed by backward().
  FeatureMap<T> forward(const FeatureMap<T>& x, Mat<T>& cols) const {
    if (x.channels != in_) throw Error(ErrorKind::kShapeMismatch, weight.name + ": channel mismatch");
    const ConvGeom g = geom(x);
    cols.resize(g.rows(), g.cols());
    im2col(x.data.data(), g, cols.data());
    FeatureMap<T> y(out_, x.batch, g.out_h, g.out_w);
    y.data.noalias() = weight.as_matrix(out_, in_ * k_ * k_) * cols;
    y.data.colwise() += Eigen::Map<const Vec<T>>(bias.value.data(), out_);
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& dy, const Mat<T>& cols, const FeatureMap<T>& x_shape) {
    const ConvGeom g = geom(x_shape);
    weight.grad_matrix(out_, in_ * k_ * k_).noalias() += dy.data * cols.transpose();
    bias.grad += dy.data.rowwise().sum();
    Mat<T> dcols = weight.as_matrix(out_, in_ * k_ * k_).transpose() * dy.data;
    FeatureMap<T> dx(in_, x_shape.batch, x_shape.height, x_shape.width);
    col2im(dcols.data(), g, dx.data.data());
    return dx;
  }

  double fan_in() const { return double(in_) * k_ * k_; }

  int in_ = 0, out_ = 0, k_ = 4, s_ = 2, p_ = 1;
  Param<T> weight;
  Param<T> bias;
};

/// Transposed convolution (adjoint of Conv2d), weight (out*k*k x in).
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int pad)
      : in_(in_ch), out_(out_ch), k_(kernel), s_(stride), p_(pad),
        weight(name + ".weight", {out_ch * kernel * kernel, in_ch}),
        bias(name + ".bias", {out_ch}) {}

  int out_size(int in) const { return (in - 1) * s_ - 2 * p_ + k_; }

  ConvGeom geom(const FeatureMap<T>& x) const {
    return {out_, x.batch, out_size(x.height), out_size(x.width), k_, s_, p_, x.height, x.width};
  }

  FeatureMap<T> forward(const FeatureMap<T>& x) const {
    if (x.channels != in_) throw Error(ErrorKind::kShapeMismatch, weight.name + ": channel mismatch");
    const ConvGeom g = geom(x);
    Mat<T> cols = weight.as_matrix(out_ * k_ * k_, in_) * x.data;
    FeatureMap<T> y(out_, x.batch, g.in_h, g.in_w);
    col2im(cols.data(), g, y.data.data());
    y.data.colwise() += Eigen::Map<const Vec<T>>(bias.value.data(), out_);
    return y;
  }

  FeatureMap<T> backward(const FeatureMap<T>& dy, const FeatureMap<T>& x) {
    const ConvGeom g = geom(x);
    Mat<T> dcols(g.rows(), g.cols());
    im2col(dy.data.data(), g, dcols.data());
    weight.grad_matrix(out_ * k_ * k_, in_).noalias() += dcols * x.data.transpose();
    bias.grad += dy.data.rowwise().sum();
    FeatureMap<T> dx(in_, x.batch, x.height, x.width);
    dx.data.noalias() = weight.as_matrix(out_ * k_ * k_, in_).transpose() * dcols;
    return dx;
  }

  /// Each output pixel receives (k/s)^2 taps per input channel.
  double fan_in() const { return double(in_) * k_ * k_ / (double(s_) * s_); }

  int in_ = 0, out_ = 0, k_ = 4, s_ = 2, p_ = 1;
  Param<T> weight;
  Param<T> bias;
};

/// Affine map on row-major (batch x features) inputs, weight (out x in).
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out)
      : in_(in), out_(out), weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

  Mat<T> forward(const Mat<T>& x) const {
    if (x.cols() != in_) throw Error(ErrorKind::kShapeMismatch, weight.name + ": input width mismatch");
    Mat<T> y = x * weight.as_matrix(out_, in_).transpose();
    y.rowwise() += Eigen::Map<const Vec<T>>(bias.value.data(), out_).transpose();
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Mat<T>& x) {
    weight.grad_matrix(out_, in_).noalias() += dy.transpose() * x;
    bias.grad += dy.colwise().sum().transpose();
    return dy * weight.as_matrix(out_, in_);
  }

  int in_ = 0, out_ = 0;
  Param<T> weight;
  Param<T> bias;
};

template <typename Derived>
void leaky_relu_inplace(Eigen::MatrixBase<Derived>& x, typename Derived::Scalar slope) {
  x = x.unaryExpr([slope](auto v) { return v > 0 ? v : slope * v; });
}

/// dy *= f'(.) given the post-activation output y (slope > 0 keeps the sign).
template <typename T>
void leaky_relu_backward(Mat<T>& dy, const Mat<T>& y, T slope) {
  dy = dy.binaryExpr(y, [slope](T g, T v) { return v > 0 ? g : slope * g; });
}

template <typename T>
void relu_inplace(Mat<T>& x) {
  x = x.cwiseMax(T(0));
}

template <typename T>
void relu_backward(Mat<T>& dy, const Mat<T>& y) {
  dy = dy.binaryExpr(y, [](T g, T v) { return v > 0 ? g : T(0); });
}

template <typename T>
void sigmoid_inplace(Mat<T>& x) {
  x = x.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
}

template <typename T>
void sigmoid_backward(Mat<T>& dy, const Mat<T>& y) {
  dy = dy.binaryExpr(y, [](T g, T v) { return g * v * (T(1) - v); });
}

/// (C x N*h*w) -> (N x C*h*w), per-sample order (c, y, x).
template <typename T>
Mat<T> to_rows(const FeatureMap<T>& fm) {
  const Eigen::Index hw = Eigen::Index(fm.height) * fm.width;
  Mat<T> out(fm.batch, fm.channels * hw);
  for (int c = 0; c < fm.channels; ++c) {
    for (int n = 0; n < fm.batch; ++n) {
      out.row(n).segment(c * hw, hw) = fm.data.row(c).segment(n * hw, hw);
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> from_rows(const Mat<T>& rows, int channels, int height, int width) {
  const Eigen::Index hw = Eigen::Index(height) * width;
  FeatureMap<T> fm(channels, static_cast<int>(rows.rows()), height, width);
  for (int c = 0; c < channels; ++c) {
    for (int n = 0; n < fm.batch; ++n) {
      fm.data.row(c).segment(n * hw, hw) = rows.row(n).segment(c * hw, hw);
    }
  }
  return fm;
}

template <typename T>
using ParamList = std::vector<Param<T>*>;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer; moment buffers are indexed like the param list.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamList<T>& params, AdamConfig cfg = {}) : cfg_(cfg) {
    for (auto* p : params) {
      m_.push_back(Vec<T>::Zero(p->size()));
      v_.push_back(Vec<T>::Zero(p->size()));
    }
  }

  void step(const ParamList<T>& params, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const T step_size = static_cast<T>(lr * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T eps = static_cast<T>(cfg_.eps * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  std::int64_t steps() const { return t_; }
  std::vector<Vec<T>>& first_moments() { return m_; }
  std::vector<Vec<T>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Vec<T>> m_;
  std::vector<Vec<T>> v_;
};

}  // namespace geomrep::nn
