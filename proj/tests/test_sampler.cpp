#include "doctest.h"

#include <random>

#include "gradcheck.hpp"
#include "voxpix/sampler.hpp"

using namespace voxpix;
using nn::Tensor;

namespace {

Tensor<double> random_grid(int c, int d, int h, int w, std::mt19937_64& rng) {
  Tensor<double> t(c, d, h, w);
  t.data = gradcheck::random_vec(t.data.size(), rng);
  return t;
}

// Naive trilinear sample written from the definition: clamp the continuous
// index, pick the two neighbours per axis, weight the 8 corners.
double naive_trilinear(const Tensor<double>& g, int c, const Vector3d& p) {
  double idx[3] = {(p.z() + 1) / 2 * g.d - 0.5, (p.y() + 1) / 2 * g.h - 0.5, (p.x() + 1) / 2 * g.w - 0.5};
  const int n[3] = {g.d, g.h, g.w};
  int lo[3], hi[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    double f = idx[a];
    if (f < 0) f = 0;
    if (f > n[a] - 1) f = n[a] - 1;
    lo[a] = int(f);
    hi[a] = lo[a] + 1 < n[a] ? lo[a] + 1 : lo[a];
    t[a] = f - lo[a];
  }
  double acc = 0;
  for (int corner = 0; corner < 8; ++corner) {
    const bool bz = corner & 4, by = corner & 2, bx = corner & 1;
    const double wgt = (bz ? t[0] : 1 - t[0]) * (by ? t[1] : 1 - t[1]) * (bx ? t[2] : 1 - t[2]);
    acc += wgt * g.at(c, bz ? hi[0] : lo[0], by ? hi[1] : lo[1], bx ? hi[2] : lo[2]);
  }
  return acc;
}

double naive_bilinear(const Tensor<double>& f, int stride, int c, const Vector2d& px) {
  double u = px.x() / stride - 0.5, v = px.y() / stride - 0.5;
  u = std::min(std::max(u, 0.0), double(f.w - 1));
  v = std::min(std::max(v, 0.0), double(f.h - 1));
  const int u0 = int(u), v0 = int(v);
  const int u1 = std::min(u0 + 1, f.w - 1), v1 = std::min(v0 + 1, f.h - 1);
  const double a = u - u0, b = v - v0;
  return (1 - a) * (1 - b) * f.at(c, 0, v0, u0) + a * (1 - b) * f.at(c, 0, v0, u1) +
         (1 - a) * b * f.at(c, 0, v1, u0) + a * b * f.at(c, 0, v1, u1);
}

Vector3d random_point(std::mt19937_64& rng, double half = 1.2) {
  std::uniform_real_distribution<double> u(-half, half);
  return {u(rng), u(rng), u(rng)};
}

Vector3d voxel_center(const Tensor<double>& g, int d, int h, int w) {
  return {(w + 0.5) * 2.0 / g.w - 1, (h + 0.5) * 2.0 / g.h - 1, (d + 0.5) * 2.0 / g.d - 1};
}

}  // namespace

TEST_CASE("offset set order and sizes") {
  OffsetSet set;
  const auto om = set.offsets();
  REQUIRE(om.size() == 13);
  CHECK(set.size() == 13);
  CHECK(om[0].isZero());
  CHECK(om[1].isApprox(Vector3d(0.0722, 0, 0)));
  CHECK(om[2].isApprox(Vector3d(-0.0722, 0, 0)));
  CHECK(om[3].isApprox(Vector3d(0, 0.0722, 0)));
  CHECK(om[6].isApprox(Vector3d(0, 0, -0.0722)));
  CHECK(om[7].isApprox(Vector3d(0.1444, 0, 0)));
  set.include_negative = false;
  CHECK(set.offsets().size() == 7);
  CHECK(set.size() == 7);
}

TEST_CASE("trilinear sampling reproduces voxel centers and constants") {
  std::mt19937_64 rng(7);
  const Tensor<double> g = random_grid(3, 4, 6, 5, rng);
  const std::vector<Vector3d> pts{voxel_center(g, 1, 4, 2), voxel_center(g, 0, 0, 0), voxel_center(g, 3, 5, 4)};
  const auto f = trilinear_sample(g, std::span<const Vector3d>(pts));
  CHECK(f(0, 2) == doctest::Approx(g.at(2, 1, 4, 2)).epsilon(1e-12));
  CHECK(f(1, 0) == doctest::Approx(g.at(0, 0, 0, 0)).epsilon(1e-12));
  CHECK(f(2, 1) == doctest::Approx(g.at(1, 3, 5, 4)).epsilon(1e-12));

  Tensor<double> k(2, 4, 6, 5);
  k.data.setConstant(0.37);
  std::vector<Vector3d> rnd;
  for (int i = 0; i < 50; ++i) rnd.push_back(random_point(rng));
  CHECK((trilinear_sample(k, std::span<const Vector3d>(rnd)).array() - 0.37).abs().maxCoeff() < 1e-12);
}

TEST_CASE("trilinear and bilinear samplers match naive oracles on random instances") {
  std::mt19937_64 rng(8);
  double worst = 0;
  for (int inst = 0; inst < 10; ++inst) {
    const Tensor<double> g = random_grid(2, 3 + inst % 3, 5, 4 + inst % 2, rng);
    std::vector<Vector3d> pts;
    for (int i = 0; i < 100; ++i) pts.push_back(random_point(rng));
    const auto f = trilinear_sample(g, std::span<const Vector3d>(pts));
    for (int i = 0; i < 100; ++i)
      for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(f(i, c) - naive_trilinear(g, c, pts[i])));

    LatentPixelGrid<double> pg{random_grid(3, 1, 6 + inst, 5, rng), 1 + inst % 2};
    std::uniform_real_distribution<double> ux(-3, 5 * pg.stride + 3), uy(-3, (6 + inst) * pg.stride + 3);
    std::vector<Vector2d> px;
    for (int i = 0; i < 100; ++i) px.emplace_back(ux(rng), uy(rng));
    const auto b = bilinear_sample(pg, std::span<const Vector2d>(px));
    for (int i = 0; i < 100; ++i)
      for (int c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(b(i, c) - naive_bilinear(pg.features, pg.stride, c, px[i])));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("bilinear sampling at pixel centers and midpoints") {
  std::mt19937_64 rng(9);
  LatentPixelGrid<double> pg{random_grid(2, 1, 4, 4, rng), 2};
  const std::vector<Vector2d> px{{2 * 2.5, 2 * 1.5}, {2 * 2.0, 2 * 0.5}};
  const auto b = bilinear_sample(pg, std::span<const Vector2d>(px));
  CHECK(b(0, 1) == doctest::Approx(pg.features.at(1, 0, 1, 2)).epsilon(1e-12));
  CHECK(b(1, 0) == doctest::Approx(0.5 * (pg.features.at(0, 0, 0, 1) + pg.features.at(0, 0, 0, 2))).epsilon(1e-12));
}

TEST_CASE("samplers are linear between nodes and continuous across the domain") {
  std::mt19937_64 rng(10);
  const Tensor<double> g = random_grid(1, 4, 4, 4, rng);
  // Dense sweep along x at a fixed voxel-center (y, z): piecewise linear with kinks only at centers.
  const int n = 2001;
  std::vector<Vector3d> pts;
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(-1.3 + 2.6 * i / (n - 1), voxel_center(g, 2, 1, 0).y(), voxel_center(g, 2, 1, 0).z());
  }
  const auto f = trilinear_sample(g, std::span<const Vector3d>(pts));
  double max_jump = 0;
  for (int i = 1; i < n; ++i) max_jump = std::max(max_jump, std::abs(f(i, 0) - f(i - 1, 0)));
  const double max_slope_step = (g.data.maxCoeff() - g.data.minCoeff()) * (2.6 / (n - 1)) / 0.5;
  CHECK(max_jump <= max_slope_step + 1e-12);
  // Halfway between centers 1 and 2 along x: their average.
  const Vector3d mid = 0.5 * (voxel_center(g, 2, 1, 1) + voxel_center(g, 2, 1, 2));
  const auto m = trilinear_sample(g, std::span<const Vector3d>(&mid, 1));
  CHECK(m(0, 0) == doctest::Approx(0.5 * (g.at(0, 2, 1, 1) + g.at(0, 2, 1, 2))).epsilon(1e-12));
}

TEST_CASE("geometry features concatenate offset samples in order") {
  std::mt19937_64 rng(11);
  const Tensor<double> g = random_grid(3, 5, 6, 4, rng);
  const std::vector<Vector3d> pts{random_point(rng, 0.9), random_point(rng, 0.9)};
  OffsetSet set;
  const auto geo = geometry_features(g, std::span<const Vector3d>(pts), set);
  REQUIRE(geo.cols() == 39);
  const auto om = set.offsets();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t k = 0; k < om.size(); ++k) {
      const Vector3d q = pts[i] + om[k];
      for (int c = 0; c < 3; ++c) CHECK(geo(i, k * 3 + c) == doctest::Approx(naive_trilinear(g, c, q)).epsilon(1e-12));
    }

  OffsetSet zero;
  zero.step = 0;
  const auto same = geometry_features(g, std::span<const Vector3d>(pts), zero);
  for (int k = 1; k < 13; ++k) CHECK(same.block(0, 3 * k, 2, 3) == same.block(0, 0, 2, 3));
}

TEST_CASE("sampler gradients equal accumulated interpolation weights") {
  std::mt19937_64 rng(12);
  Tensor<double> g = random_grid(2, 4, 5, 3, rng);
  std::vector<Vector3d> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(random_point(rng));
  const OffsetSet set;
  const Eigen::Index cols = 13 * 2;
  const nn::Mat<double> probe = nn::Mat<double>::Random(20, cols);
  auto loss = [&] { return (geometry_features(g, std::span<const Vector3d>(pts), set).array() * probe.array()).sum(); };
  Tensor<double> grad(g.c, g.d, g.h, g.w);
  geometry_backward(std::span<const Vector3d>(pts), set, probe, grad);
  // The readout is linear in the grid: per-entry finite differences are exact up to rounding.
  double worst = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    const double h = 1e-3, keep = g.data[i];
    g.data[i] = keep + h;
    const double plus = loss();
    g.data[i] = keep - h;
    const double minus = loss();
    g.data[i] = keep;
    worst = std::max(worst, gradcheck::relative_error((plus - minus) / (2 * h), grad.data[i]));
  }
  CHECK(worst < 1e-5);

  LatentPixelGrid<double> pg{random_grid(3, 1, 5, 6, rng), 2};
  std::vector<Vector2d> px;
  std::uniform_real_distribution<double> u(-2, 14);
  for (int i = 0; i < 20; ++i) px.emplace_back(u(rng), u(rng));
  const nn::Mat<double> bprobe = nn::Mat<double>::Random(20, 3);
  Tensor<double> bgrad(3, 1, 5, 6);
  bilinear_backward(std::span<const Vector2d>(px), 2, bprobe, bgrad);
  auto bloss = [&] { return (bilinear_sample(pg, std::span<const Vector2d>(px)).array() * bprobe.array()).sum(); };
  worst = 0;
  for (Eigen::Index i = 0; i < pg.features.data.size(); ++i) {
    const double h = 1e-3, keep = pg.features.data[i];
    pg.features.data[i] = keep + h;
    const double plus = bloss();
    pg.features.data[i] = keep - h;
    const double minus = bloss();
    pg.features.data[i] = keep;
    worst = std::max(worst, gradcheck::relative_error((plus - minus) / (2 * h), bgrad.data[i]));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("encoding layout and the front/back ray pair") {
  std::mt19937_64 rng(13);
  const Tensor<double> g = random_grid(8, 32, 48, 32, rng);
  LatentPixelGrid<double> pg{random_grid(256, 1, 192, 128, rng), 1};
  const auto cam = WeakPerspectiveCamera::standard();
  const std::vector<Vector3d> pts{{0.2, 0.3, 0.4}, {0.2, 0.3, -0.4}, {0, 0, 0}};
  const auto enc = build_encoding(g, pg, cam, std::span<const Vector3d>(pts), OffsetSet{});
  const EncodingLayout layout;
  CHECK(layout.total() == 361);
  CHECK(layout.descriptor() == "geometry:13x8|pixel:256|depth:1");
  REQUIRE(enc.rows() == 3);
  REQUIRE(enc.cols() == 361);
  CHECK(enc.block(0, 104, 1, 256) == enc.block(1, 104, 1, 256));
  CHECK(enc(0, 360) == 0.4);
  CHECK(enc(1, 360) == -0.4);
  CHECK((enc.block(0, 0, 1, 104) - enc.block(1, 0, 1, 104)).cwiseAbs().maxCoeff() > 1e-3);
  const Vector2d pp = cam.principal_point();
  const auto at_pp = bilinear_sample(pg, std::span<const Vector2d>(&pp, 1));
  CHECK(enc.block(2, 104, 1, 256) == at_pp);

  nn::Mat<double> wrong(3, 10);
  CHECK_THROWS_AS(build_encoding_backward<double>(cam, std::span<const Vector3d>(pts), OffsetSet{}, layout, wrong,
                                                  nullptr, nullptr),
                  Error);
}
