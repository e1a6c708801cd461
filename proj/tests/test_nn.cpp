#include "doctest.h"

#include <random>

#include "gradcheck.hpp"
#include "voxpix/nn.hpp"

using namespace voxpix;
using namespace voxpix::nn;

namespace {

Tensor<double> random_tensor(int c, int d, int h, int w, std::mt19937_64& rng) {
  Tensor<double> t(c, d, h, w);
  t.data = gradcheck::random_vec(t.data.size(), rng);
  return t;
}

// Direct nested-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Conv<double>& conv, std::array<int, 3> k,
                          std::array<int, 3> s, std::array<int, 3> p) {
  const int out = conv.out_channels();
  const int od = (x.d + 2 * p[0] - k[0]) / s[0] + 1;
  const int oh = (x.h + 2 * p[1] - k[1]) / s[1] + 1;
  const int ow = (x.w + 2 * p[2] - k[2]) / s[2] + 1;
  Tensor<double> y(out, od, oh, ow);
  for (int o = 0; o < out; ++o)
    for (int z = 0; z < od; ++z)
      for (int r = 0; r < oh; ++r)
        for (int q = 0; q < ow; ++q) {
          double acc = conv.bias.value[o];
          for (int c = 0; c < x.c; ++c)
            for (int a = 0; a < k[0]; ++a)
              for (int b = 0; b < k[1]; ++b)
                for (int e = 0; e < k[2]; ++e) {
                  const int iz = z * s[0] - p[0] + a, iy = r * s[1] - p[1] + b, ix = q * s[2] - p[2] + e;
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= x.d || iy >= x.h || ix >= x.w) continue;
                  const std::size_t widx = (((std::size_t(o) * x.c + c) * k[0] + a) * k[1] + b) * k[2] + e;
                  acc += conv.weight.value[widx] * x.at(c, iz, iy, ix);
                }
          y.at(o, z, r, q) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv forward matches a direct loop for 3D, strided and pointwise kernels") {
  std::mt19937_64 rng(1);
  struct Case {
    std::array<int, 3> k, s, p;
  };
  for (const Case& cs : {Case{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}}, Case{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}},
                         Case{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}}, Case{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}}}) {
    Conv<double> conv("c", 3, 4, cs.k, cs.s, cs.p);
    conv.weight.value = gradcheck::random_vec(conv.weight.size(), rng);
    conv.bias.value = gradcheck::random_vec(4, rng);
    const Tensor<double> x = random_tensor(3, cs.k[0] == 1 ? 1 : 5, 7, 6, rng);
    const Tensor<double> y = conv.forward(x);
    const Tensor<double> ref = naive_conv(x, conv, cs.k, cs.s, cs.p);
    REQUIRE(y.same_shape(ref));
    CHECK((y.data - ref.data).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv rejects a channel mismatch") {
  Conv<double> conv = Conv<double>::conv2d("stem", 4, 8, 3);
  CHECK_THROWS_AS(conv.forward(Tensor<double>(3, 1, 8, 8)), Error);
}

TEST_CASE("conv and linear backward pass finite differences") {
  std::mt19937_64 rng(2);
  Conv<double> conv = Conv<double>::conv3d("c", 2, 3, 3, 2);
  conv.init(rng);
  conv.bias.value = gradcheck::random_vec(3, rng, 0.1);
  Tensor<double> x = random_tensor(2, 5, 6, 4, rng);
  const Tensor<double> probe = [&] {
    Tensor<double> y = conv.forward(x);
    return random_tensor(y.c, y.d, y.h, y.w, rng);
  }();
  auto loss = [&] {
    Tensor<double> y = conv.forward(x);
    leaky_inplace(y.data);
    return y.data.dot(probe.data);
  };
  Tensor<double> dx;
  auto analytic = [&] {
    Tensor<double> y = conv.forward(x);
    leaky_inplace(y.data);
    Tensor<double> g = probe;
    leaky_backward(y.data, g.data);
    dx = conv.backward(x, g);
  };
  ParamList<double> params;
  conv.collect(params);
  CHECK(gradcheck::parameter_direction_error(params, loss, analytic, rng) < 1e-6);
  CHECK(gradcheck::input_direction_error(x.data, dx.data, loss, rng) < 1e-6);

  Linear<double> lin("l", 5, 3);
  lin.init(rng);
  Mat<double> in = Mat<double>::Random(4, 5);
  const Mat<double> lprobe = Mat<double>::Random(4, 3);
  auto lloss = [&] { return (lin.forward(in).array() * lprobe.array()).sum(); };
  Mat<double> din;
  auto lanalytic = [&] { din = lin.backward(in, lprobe); };
  ParamList<double> lparams;
  lin.collect(lparams);
  CHECK(gradcheck::parameter_direction_error(lparams, lloss, lanalytic, rng) < 1e-6);
  Vec<double> flat = Eigen::Map<Vec<double>>(in.data(), in.size());
  const Vec<double> dflat = Eigen::Map<Vec<double>>(din.data(), din.size());
  auto flat_loss = [&] {
    Eigen::Map<Vec<double>>(in.data(), in.size()) = flat;
    return lloss();
  };
  CHECK(gradcheck::input_direction_error(flat, dflat, flat_loss, rng) < 1e-6);
}

TEST_CASE("upsample backward is the adjoint of upsample") {
  std::mt19937_64 rng(3);
  const Tensor<double> x = random_tensor(2, 3, 4, 5, rng);
  const Tensor<double> up = upsample(x, {2, 2, 2});
  CHECK(up.d == 6);
  CHECK(up.at(1, 5, 7, 9) == x.at(1, 2, 3, 4));
  const Tensor<double> g = random_tensor(up.c, up.d, up.h, up.w, rng);
  CHECK(std::abs(up.data.dot(g.data) - x.data.dot(upsample_backward(g, {2, 2, 2}).data)) < 1e-10);
}

TEST_CASE("concat and split are inverse") {
  std::mt19937_64 rng(4);
  const Tensor<double> a = random_tensor(2, 1, 3, 3, rng), b = random_tensor(3, 1, 3, 3, rng);
  const auto [a2, b2] = split_channels(concat_channels(a, b), 2);
  CHECK(a2.data == a.data);
  CHECK(b2.data == b.data);
  CHECK_THROWS_AS(concat_channels(a, Tensor<double>(1, 1, 2, 3)), Error);
}

TEST_CASE("rmsprop follows the squared-gradient moving average update") {
  Param<double> p("p", {2});
  p.value << 1.0, -2.0;
  RmsProp<double> opt({&p}, {.lr = 0.1, .alpha = 0.99, .eps = 1e-8});
  p.grad << 0.5, -4.0;
  opt.step();
  // v = 0.01 g^2, step = lr g / sqrt(v) = lr sign(g) / 0.1
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (std::sqrt(0.01 * 0.25) + 1e-8)).epsilon(1e-12));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (std::sqrt(0.01 * 16.0) + 1e-8)).epsilon(1e-12));

  const Vec<double> before = p.value;
  opt.set_lr(0.0);
  opt.step();
  CHECK(p.value == before);
}

TEST_CASE("he init draws zero-mean weights at the leaky gain") {
  std::mt19937_64 rng(5);
  Conv<double> conv = Conv<double>::conv2d("c", 16, 64, 3);
  conv.init(rng);
  const double n = double(conv.weight.size());
  const double mean = conv.weight.value.sum() / n;
  const double var = (conv.weight.value.array() - mean).square().sum() / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(2.0 / (1.04 * 144)).epsilon(0.05));
  CHECK(conv.bias.value.isZero());
}
