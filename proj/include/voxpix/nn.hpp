#pragma once

// Minimal dense layers with hand-written backward passes. Feature maps are
// [C, D, H, W] tensors; 2D maps use D = 1. Forward passes are const; callers
// keep the activations each backward pass needs.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "voxpix/error.hpp"

namespace voxpix::nn {

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense 4D tensor [C, D, H, W], row-major.
template <class T>
struct Tensor {
  int c = 0, d = 0, h = 0, w = 0;
  Vec<T> data;

  Tensor() = default;
  Tensor(int c_, int d_, int h_, int w_) : c(c_), d(d_), h(h_), w(w_), data(Vec<T>::Zero(std::size_t(c_) * d_ * h_ * w_)) {}

  std::size_t voxels() const { return std::size_t(d) * h * w; }
  std::size_t size() const { return std::size_t(c) * voxels(); }
  T& at(int ci, int di, int hi, int wi) { return data[((std::size_t(ci) * d + di) * h + hi) * w + wi]; }
  T at(int ci, int di, int hi, int wi) const { return data[((std::size_t(ci) * d + di) * h + hi) * w + wi]; }
  bool same_shape(const Tensor& o) const { return c == o.c && d == o.d && h == o.h && w == o.w; }
  std::string shape_string() const;

  // [C, D*H*W] view.
  Eigen::Map<Mat<T>> matrix() { return {data.data(), c, Eigen::Index(voxels())}; }
  Eigen::Map<const Mat<T>> matrix() const { return {data.data(), c, Eigen::Index(voxels())}; }
};

template <class T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Vec<T> value;
  Vec<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const { return std::size_t(value.size()); }
};

template <class T>
using ParamList = std::vector<Param<T>*>;

constexpr double kLeakySlope = 0.2;

// He-normal weights for a leaky-rectifier network, zero bias.
template <class T>
void init_he(Param<T>& weight, int fan_in, std::mt19937_64& rng);

// 3D convolution; 2D convolutions use kernel/stride/pad 1/1/0 along depth.
template <class T>
class Conv {
 public:
  Conv() = default;
  Conv(std::string name, int in_channels, int out_channels, std::array<int, 3> kernel,
       std::array<int, 3> stride, std::array<int, 3> pad);

  static Conv conv2d(std::string name, int in, int out, int k, int stride = 1) {
    return Conv(std::move(name), in, out, {1, k, k}, {1, stride, stride}, {0, k / 2, k / 2});
  }
  static Conv conv3d(std::string name, int in, int out, int k, int stride = 1) {
    return Conv(std::move(name), in, out, {k, k, k}, {stride, stride, stride}, {k / 2, k / 2, k / 2});
  }

  Tensor<T> forward(const Tensor<T>& x) const;
  // Accumulates parameter gradients; returns d loss / d input.
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& grad_out);

  void init(std::mt19937_64& rng) { init_he(weight, in_ * k_[0] * k_[1] * k_[2], rng); }
  void collect(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }
  std::array<int, 3> output_dims(const Tensor<T>& x) const;
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Param<T> weight;  // [out, in * kd * kh * kw]
  Param<T> bias;    // [out]

 private:
  Mat<T> im2col(const Tensor<T>& x, const std::array<int, 3>& od) const;

  int in_ = 0, out_ = 0;
  std::array<int, 3> k_{}, s_{}, p_{};
};

// y = x W^T + b on row-batched inputs [N, in].
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out);

  Mat<T> forward(const Mat<T>& x) const;
  Mat<T> backward(const Mat<T>& input, const Mat<T>& grad_out);

  void init(std::mt19937_64& rng) { init_he(weight, in_, rng); }
  void collect(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<T> weight;  // [out, in]
  Param<T> bias;    // [out]

 private:
  int in_ = 0, out_ = 0;
};

template <class T>
T leaky(T v) {
  return v > T(0) ? v : T(kLeakySlope) * v;
}

// In place; the output sign equals the input sign, so backward needs only the output.
template <class T>
void leaky_inplace(Vec<T>& v) {
  for (auto& x : v) x = leaky(x);
}
template <class T>
void leaky_inplace(Mat<T>& v) {
  v = v.unaryExpr([](T x) { return leaky(x); });
}
template <class T>
void leaky_backward(const Vec<T>& output, Vec<T>& grad) {
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (output[i] <= T(0)) grad[i] *= T(kLeakySlope);
  }
}
template <class T>
void leaky_backward(const Mat<T>& output, Mat<T>& grad) {
  grad = (output.array() > T(0)).select(grad, grad * T(kLeakySlope));
}

template <class T>
T sigmoid(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

// Nearest-neighbour upsampling by integer factors along (D, H, W).
template <class T>
Tensor<T> upsample(const Tensor<T>& x, std::array<int, 3> f);
template <class T>
Tensor<T> upsample_backward(const Tensor<T>& grad, std::array<int, 3> f);

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Splits a gradient of concat(a, b) into its two parts.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, int channels_a);

// Squared-gradient moving average (RMSprop) with conventional defaults.
template <class T>
class RmsProp {
 public:
  struct Options {
    double lr = 1e-3;
    double alpha = 0.99;
    double eps = 1e-8;
  };
  RmsProp() = default;
  RmsProp(ParamList<T> params, Options options);

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  void step();
  void zero_grad();

  std::vector<Vec<T>>& state() { return square_avg_; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  Options options_;
  std::vector<Vec<T>> square_avg_;
};

template <class T>
std::size_t parameter_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

}  // namespace voxpix::nn
