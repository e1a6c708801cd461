#include "voxpix/nn.hpp"

#include <cmath>
#include <sstream>

namespace voxpix::nn {

template <class T>
std::string Tensor<T>::shape_string() const {
  std::ostringstream s;
  s << '[' << c << ", " << d << ", " << h << ", " << w << ']';
  return s.str();
}

template <class T>
Param<T>::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int v : shape) count *= std::size_t(v);
  value = Vec<T>::Zero(count);
  grad = Vec<T>::Zero(count);
}

template <class T>
void init_he(Param<T>& weight, int fan_in, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : weight.value) v = T(normal(rng));
}

template <class T>
Conv<T>::Conv(std::string name, int in_channels, int out_channels, std::array<int, 3> kernel,
              std::array<int, 3> stride, std::array<int, 3> pad)
    : weight(name + ".weight", {out_channels, in_channels, kernel[0], kernel[1], kernel[2]}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      s_(stride),
      p_(pad) {}

template <class T>
std::array<int, 3> Conv<T>::output_dims(const Tensor<T>& x) const {
  const std::array<int, 3> in{x.d, x.h, x.w};
  std::array<int, 3> out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * p_[a] - k_[a]) / s_[a] + 1;
  return out;
}

template <class T>
Mat<T> Conv<T>::im2col(const Tensor<T>& x, const std::array<int, 3>& od) const {
  const int rows = in_ * k_[0] * k_[1] * k_[2];
  const Eigen::Index cols = Eigen::Index(od[0]) * od[1] * od[2];
  Mat<T> out(rows, cols);
  int row = 0;
  for (int c = 0; c < in_; ++c) {
    for (int kz = 0; kz < k_[0]; ++kz) {
      for (int ky = 0; ky < k_[1]; ++ky) {
        for (int kx = 0; kx < k_[2]; ++kx, ++row) {
          T* dst = out.row(row).data();
          for (int oz = 0; oz < od[0]; ++oz) {
            const int iz = oz * s_[0] - p_[0] + kz;
            for (int oy = 0; oy < od[1]; ++oy) {
              const int iy = oy * s_[1] - p_[1] + ky;
              T* line = dst + (std::size_t(oz) * od[1] + oy) * od[2];
              if (iz < 0 || iz >= x.d || iy < 0 || iy >= x.h) {
                std::fill(line, line + od[2], T(0));
                continue;
              }
              const T* src = &x.data[((std::size_t(c) * x.d + iz) * x.h + iy) * x.w];
              for (int ox = 0; ox < od[2]; ++ox) {
                const int ix = ox * s_[2] - p_[2] + kx;
                line[ox] = (ix >= 0 && ix < x.w) ? src[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> Conv<T>::forward(const Tensor<T>& x) const {
  if (x.c != in_) {
    throw Error(ErrorKind::shape_mismatch, weight.name + ": expected " + std::to_string(in_) +
                                               " input channels, got " + x.shape_string());
  }
  const auto od = output_dims(x);
  Tensor<T> y(out_, od[0], od[1], od[2]);
  const Eigen::Map<const Mat<T>> W(weight.value.data(), out_, weight.size() / out_);
  const bool pointwise = k_ == std::array<int, 3>{1, 1, 1} && s_ == std::array<int, 3>{1, 1, 1};
  if (pointwise) {
    y.matrix().noalias() = W * x.matrix();
  } else {
    y.matrix().noalias() = W * im2col(x, od);
  }
  y.matrix().colwise() += bias.value;
  return y;
}

template <class T>
Tensor<T> Conv<T>::backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  const auto od = output_dims(x);
  if (grad_out.c != out_ || grad_out.d != od[0] || grad_out.h != od[1] || grad_out.w != od[2]) {
    throw Error(ErrorKind::shape_mismatch, weight.name + ": gradient shape " + grad_out.shape_string());
  }
  const Eigen::Index K = Eigen::Index(weight.size() / out_);
  const Eigen::Map<const Mat<T>> W(weight.value.data(), out_, K);
  Eigen::Map<Mat<T>> dW(weight.grad.data(), out_, K);
  const auto G = grad_out.matrix();
  bias.grad += G.rowwise().sum();

  Tensor<T> dx(x.c, x.d, x.h, x.w);
  const bool pointwise = k_ == std::array<int, 3>{1, 1, 1} && s_ == std::array<int, 3>{1, 1, 1};
  if (pointwise) {
    dW.noalias() += G * x.matrix().transpose();
    dx.matrix().noalias() = W.transpose() * G;
    return dx;
  }
  const Mat<T> cols = im2col(x, od);
  dW.noalias() += G * cols.transpose();
  const Mat<T> dcols = W.transpose() * G;
  int row = 0;
  for (int c = 0; c < in_; ++c) {
    for (int kz = 0; kz < k_[0]; ++kz) {
      for (int ky = 0; ky < k_[1]; ++ky) {
        for (int kx = 0; kx < k_[2]; ++kx, ++row) {
          const T* src = dcols.row(row).data();
          for (int oz = 0; oz < od[0]; ++oz) {
            const int iz = oz * s_[0] - p_[0] + kz;
            if (iz < 0 || iz >= x.d) continue;
            for (int oy = 0; oy < od[1]; ++oy) {
              const int iy = oy * s_[1] - p_[1] + ky;
              if (iy < 0 || iy >= x.h) continue;
              const T* line = src + (std::size_t(oz) * od[1] + oy) * od[2];
              T* dst = &dx.data[((std::size_t(c) * x.d + iz) * x.h + iy) * x.w];
              for (int ox = 0; ox < od[2]; ++ox) {
                const int ix = ox * s_[2] - p_[2] + kx;
                if (ix >= 0 && ix < x.w) dst[ix] += line[ox];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

template <class T>
Linear<T>::Linear(std::string name, int in, int out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

template <class T>
Mat<T> Linear<T>::forward(const Mat<T>& x) const {
  if (x.cols() != in_) {
    throw Error(ErrorKind::shape_mismatch, weight.name + ": expected " + std::to_string(in_) +
                                               " features, got " + std::to_string(x.cols()));
  }
  const Eigen::Map<const Mat<T>> W(weight.value.data(), out_, in_);
  Mat<T> y(x.rows(), out_);
  y.noalias() = x * W.transpose();
  y.rowwise() += bias.value.transpose();
  return y;
}

template <class T>
Mat<T> Linear<T>::backward(const Mat<T>& input, const Mat<T>& grad_out) {
  const Eigen::Map<const Mat<T>> W(weight.value.data(), out_, in_);
  Eigen::Map<Mat<T>> dW(weight.grad.data(), out_, in_);
  dW.noalias() += grad_out.transpose() * input;
  bias.grad += grad_out.colwise().sum().transpose();
  Mat<T> dx(grad_out.rows(), in_);
  dx.noalias() = grad_out * W;
  return dx;
}

template <class T>
Tensor<T> upsample(const Tensor<T>& x, std::array<int, 3> f) {
  Tensor<T> y(x.c, x.d * f[0], x.h * f[1], x.w * f[2]);
  for (int c = 0; c < y.c; ++c)
    for (int z = 0; z < y.d; ++z)
      for (int r = 0; r < y.h; ++r) {
        const T* src = &x.data[((std::size_t(c) * x.d + z / f[0]) * x.h + r / f[1]) * x.w];
        T* dst = &y.data[((std::size_t(c) * y.d + z) * y.h + r) * y.w];
        for (int q = 0; q < y.w; ++q) dst[q] = src[q / f[2]];
      }
  return y;
}

template <class T>
Tensor<T> upsample_backward(const Tensor<T>& grad, std::array<int, 3> f) {
  Tensor<T> dx(grad.c, grad.d / f[0], grad.h / f[1], grad.w / f[2]);
  for (int c = 0; c < grad.c; ++c)
    for (int z = 0; z < grad.d; ++z)
      for (int r = 0; r < grad.h; ++r) {
        const T* src = &grad.data[((std::size_t(c) * grad.d + z) * grad.h + r) * grad.w];
        T* dst = &dx.data[((std::size_t(c) * dx.d + z / f[0]) * dx.h + r / f[1]) * dx.w];
        for (int q = 0; q < grad.w; ++q) dst[q / f[2]] += src[q];
      }
  return dx;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.d != b.d || a.h != b.h || a.w != b.w) {
    throw Error(ErrorKind::shape_mismatch, "concat: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor<T> y(a.c + b.c, a.d, a.h, a.w);
  y.data.head(a.size()) = a.data;
  y.data.tail(b.size()) = b.data;
  return y;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, int channels_a) {
  Tensor<T> a(channels_a, grad.d, grad.h, grad.w), b(grad.c - channels_a, grad.d, grad.h, grad.w);
  a.data = grad.data.head(a.size());
  b.data = grad.data.tail(b.size());
  return {std::move(a), std::move(b)};
}

template <class T>
RmsProp<T>::RmsProp(ParamList<T> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) square_avg_.push_back(Vec<T>::Zero(p->size()));
}

template <class T>
void RmsProp<T>::step() {
  const T lr = T(options_.lr), alpha = T(options_.alpha), eps = T(options_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& sq = square_avg_[i];
    sq = alpha * sq + (T(1) - alpha) * p.grad.cwiseAbs2();
    if (lr == T(0)) continue;
    p.value.array() -= lr * p.grad.array() / (sq.array().sqrt() + eps);
  }
}

template <class T>
void RmsProp<T>::zero_grad() {
  for (auto* p : params_) p->grad.setZero();
}

#define VOXPIX_NN_INSTANTIATE(T)                                                              \
  template struct Tensor<T>;                                                                  \
  template struct Param<T>;                                                                   \
  template void init_he<T>(Param<T>&, int, std::mt19937_64&);                                 \
  template class Conv<T>;                                                                     \
  template class Linear<T>;                                                                   \
  template Tensor<T> upsample<T>(const Tensor<T>&, std::array<int, 3>);                       \
  template Tensor<T> upsample_backward<T>(const Tensor<T>&, std::array<int, 3>);              \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, int);          \
  template class RmsProp<T>;

VOXPIX_NN_INSTANTIATE(float)
VOXPIX_NN_INSTANTIATE(double)

}  // namespace voxpix::nn
