#include "doctest.h"

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "voxpix/geometry.hpp"
#include "voxpix/primitives.hpp"

using namespace voxpix;

namespace {

std::vector<Vector3d> uniform_points(int n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vector3d> pts(n);
  for (auto& p : pts) p = Vector3d(u(rng), u(rng), u(rng));
  return pts;
}

DenseFieldGrid sphere_field(int res, double radius) {
  DenseFieldGrid grid;
  grid.shape = GridShape{res, res, res};
  grid.values.resize(grid.shape.size());
  for (int d = 0; d < res; ++d)
    for (int h = 0; h < res; ++h)
      for (int w = 0; w < res; ++w)
        grid.values[grid.shape.index(d, h, w)] =
            grid.shape.cell_center(d, h, w).norm() < radius ? 1.0f : 0.0f;
  return grid;
}

}  // namespace

TEST_CASE("point_in_mesh on a sphere") {
  const TriMesh sphere = icosphere(1.0, 3);
  const std::vector<Vector3d> pts = {Vector3d::Zero(), Vector3d(2, 0, 0)};
  const auto labels = point_in_mesh(sphere, pts);
  CHECK(labels[0] == 1);
  CHECK(labels[1] == 0);
}

TEST_CASE("point_in_mesh inside fraction matches the analytic volume ratio") {
  const TriMesh sphere = icosphere(0.5, 4);
  const auto pts = uniform_points(10000, 42);
  const auto labels = point_in_mesh(sphere, pts);
  double inside = 0;
  for (auto l : labels) inside += l;
  const double expected = 4.0 / 3.0 * M_PI * 0.125 / 8.0;  // 0.0654
  CHECK(std::abs(inside / labels.size() - expected) < 0.01);
}

TEST_CASE("point_in_mesh agrees with analytic box and sphere tests off the surface shell") {
  const Vector3d lo(-0.4, -0.7, -0.2), hi(0.6, 0.3, 0.5);
  const TriMesh box = box_mesh(lo, hi);
  const auto pts = uniform_points(5000, 7);
  const auto box_labels = point_in_mesh(box, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vector3d& p = pts[i];
    const double dist_to_faces = std::min((p - lo).cwiseAbs().minCoeff(), (hi - p).cwiseAbs().minCoeff());
    if (dist_to_faces < 1e-6) continue;
    const bool analytic = (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
    CHECK(box_labels[i] == (analytic ? 1 : 0));
  }

  const TriMesh sphere = icosphere(0.6, 4);
  const double shell = icosphere_chord_error(0.6, 4) + 1e-6;
  const auto sphere_labels = point_in_mesh(sphere, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double r = pts[i].norm();
    if (std::abs(r - 0.6) < shell) continue;
    CHECK(sphere_labels[i] == (r < 0.6 ? 1 : 0));
  }
}

TEST_CASE("point_in_mesh handles rays that graze vertices and edges") {
  // A box whose vertices and edges lie exactly on the +x rays of these points.
  const TriMesh box = box_mesh(Vector3d(-1, -1, -1), Vector3d(1, 1, 1));
  const std::vector<Vector3d> pts = {Vector3d(0, 1 - 1e-3, 1 - 1e-3), Vector3d(0, 0, 0),
                                     Vector3d(0.5, 0, 0.5), Vector3d(-2, 0, 0), Vector3d(0, 0.5, 0.5)};
  const auto labels = point_in_mesh(box, pts);
  CHECK(labels[0] == 1);
  CHECK(labels[1] == 1);  // ray passes through the diagonal edge of a face split
  CHECK(labels[2] == 1);
  CHECK(labels[3] == 0);
  CHECK(labels[4] == 1);
}

TEST_CASE("point_in_mesh rejects open meshes") {
  const std::vector<Vector3d> pts = {Vector3d::Zero()};
  CHECK_THROWS_AS(point_in_mesh(quad_mesh(0, 0, 1, 1, 0), pts), Error);
}

TEST_CASE("voxelize_coarse edge cases") {
  SUBCASE("far-away mesh gives an empty volume") {
    const auto vol = voxelize_coarse(box_mesh(Vector3d(5, 5, 5), Vector3d(6, 6, 6)));
    CHECK(vol.values.size() == 32u * 48u * 32u);
    CHECK(vol.occupied_fraction() == 0.0);
  }
  SUBCASE("central box matches enumeration of cell centers") {
    const auto vol = voxelize_coarse(box_mesh(Vector3d::Constant(-0.5), Vector3d::Constant(0.5)));
    std::size_t expected = 0, got = 0;
    for (int d = 0; d < 32; ++d)
      for (int h = 0; h < 48; ++h)
        for (int w = 0; w < 32; ++w) {
          const double x = -1 + (w + 0.5) / 16.0, y = -1 + (h + 0.5) / 24.0, z = -1 + (d + 0.5) / 16.0;
          expected += std::abs(x) < 0.5 && std::abs(y) < 0.5 && std::abs(z) < 0.5;
        }
    for (float v : vol.values) got += v == 1.0f;
    CHECK(expected == 16u * 24u * 16u);
    CHECK(got == expected);
  }
  SUBCASE("sphere agrees with the analytic indicator on at least 99% of cells") {
    const auto vol = voxelize_coarse(icosphere(0.5, 4));
    std::size_t agree = 0;
    for (int d = 0; d < 32; ++d)
      for (int h = 0; h < 48; ++h)
        for (int w = 0; w < 32; ++w) {
          const bool analytic = kCoarseShape.cell_center(d, h, w).norm() < 0.5;
          agree += (vol.at(d, h, w) == 1.0f) == analytic;
        }
    CHECK(double(agree) / vol.values.size() >= 0.99);
  }
}

TEST_CASE("voxelize_coarse equals point_in_mesh at cell centers") {
  const TriMesh mesh = icosphere(0.7, 2, Vector3d(0.1, -0.2, 0.05));
  const GridShape shape{7, 9, 5};
  const auto vol = voxelize_coarse(mesh, shape);
  std::vector<Vector3d> centers;
  for (int d = 0; d < shape.depth; ++d)
    for (int h = 0; h < shape.height; ++h)
      for (int w = 0; w < shape.width; ++w) centers.push_back(shape.cell_center(d, h, w));
  const auto labels = point_in_mesh(mesh, centers);
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(vol.values[i] == float(labels[i]));
}

TEST_CASE("sample_surface") {
  SUBCASE("points lie on the only triangle") {
    TriMesh tri;
    tri.vertices.resize(3, 3);
    tri.vertices << 0.1, 0.2, 0.3, 0.9, -0.4, 0.2, -0.3, 0.5, 0.8;
    tri.faces.resize(1, 3);
    tri.faces << 0, 1, 2;
    const auto s = sample_surface(tri, 3, 11);
    const Vector3d n = tri.face_normal(0);
    for (const auto& p : s.points) CHECK(std::abs(n.dot(p - tri.vertex(0))) < 1e-9);
  }
  SUBCASE("face selection is proportional to area") {
    TriMesh two;
    two.vertices.resize(6, 3);
    two.vertices << 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 1;
    two.faces.resize(2, 3);
    two.faces << 0, 1, 2, 3, 4, 5;
    const auto s = sample_surface(two, 40000, 3);
    double first = 0;
    for (int f : s.faces) first += f == 0;
    CHECK(std::abs(first / 40000.0 - 0.75) < 0.01);
  }
  SUBCASE("icosphere samples lie within the chord error of the sphere") {
    const auto s = sample_surface(icosphere(0.5, 3), 10000, 5);
    const double chord = icosphere_chord_error(0.5, 3);
    for (const auto& p : s.points) {
      CHECK(p.norm() <= 0.5 + 1e-12);
      CHECK(p.norm() >= 0.5 - chord - 1e-12);
    }
  }
  SUBCASE("deterministic given the seed") {
    const auto a = sample_surface(icosphere(0.5, 1), 100, 9);
    const auto b = sample_surface(icosphere(0.5, 1), 100, 9);
    CHECK(a.points == b.points);
  }
  SUBCASE("zero-area mesh is rejected") {
    TriMesh flat = box_mesh(Vector3d::Zero(), Vector3d::Zero());
    CHECK_THROWS_AS(sample_surface(flat, 10, 1), Error);
  }
}

TEST_CASE("marching cubes table: every case traces closed, outward loops") {
  const auto& table = marching_cubes_table();
  REQUIRE(table.size() == 256);
  CHECK(table[0].triangles.empty());
  CHECK(table[255].triangles.empty());
  for (int mask = 1; mask < 255; ++mask) CHECK_FALSE(table[mask].triangles.empty());
  CHECK(table[1].triangles.size() == 1);
  CHECK(table[254].triangles.size() == 1);
  // Corner 0 inside: the triangle must face away from the origin corner.
  const auto& tri = table[1].triangles[0];
  auto mid = [](int e) {
    const int axis = e / 4;
    Vector3d p = Vector3d::Zero();
    p[axis] = 0.5;
    return p;
  };
  const Vector3d n = (mid(tri[1]) - mid(tri[0])).cross(mid(tri[2]) - mid(tri[0]));
  CHECK(n.dot(Vector3d::Ones()) > 0.0);
}

TEST_CASE("marching cubes edge cases") {
  SUBCASE("all-zero grid gives an empty mesh") {
    DenseFieldGrid grid{GridShape{4, 4, 4}, std::vector<float>(64, 0.0f)};
    CHECK(marching_cubes(grid).empty());
  }
  SUBCASE("iso outside the value range gives an empty mesh") {
    DenseFieldGrid grid = sphere_field(8, 0.5);
    CHECK(marching_cubes(grid, 2.0).empty());
  }
  SUBCASE("single occupied cell gives a closed genus-0 surface") {
    DenseFieldGrid grid{GridShape{5, 5, 5}, std::vector<float>(125, 0.0f)};
    grid.values[grid.shape.index(2, 2, 2)] = 1.0f;
    const TriMesh mesh = marching_cubes(grid);
    CHECK(mesh.num_faces() == 8);
    CHECK(is_watertight(mesh));
    CHECK(euler_characteristic(mesh) == 2);
    // Faces point away from the occupied node.
    const Vector3d center = grid.shape.cell_center(2, 2, 2);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
      const Vector3d centroid = (mesh.vertex(mesh.faces(f, 0)) + mesh.vertex(mesh.faces(f, 1)) +
                                 mesh.vertex(mesh.faces(f, 2))) / 3.0;
      CHECK(mesh.face_normal(f).dot(centroid - center) > 0.0);
    }
  }
  SUBCASE("resolution below 2 is rejected") {
    DenseFieldGrid grid{GridShape{1, 4, 4}, std::vector<float>(16, 0.0f)};
    CHECK_THROWS_AS(marching_cubes(grid), Error);
  }
}

TEST_CASE("marching cubes on a sphere field stays within one cell diagonal") {
  const DenseFieldGrid grid = sphere_field(64, 0.5);
  const TriMesh mesh = marching_cubes(grid);
  REQUIRE(!mesh.empty());
  const double diagonal = grid.cell_spacing().norm();
  CHECK(diagonal == doctest::Approx(0.054).epsilon(0.01));
  double worst = 0;
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
    worst = std::max(worst, std::abs(mesh.vertex(i).norm() - 0.5));
  }
  CHECK(worst <= diagonal);
  CHECK(is_watertight(mesh));
  CHECK(euler_characteristic(mesh) == 2);
}

TEST_CASE("marching cubes output is watertight on random fields") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 20; ++trial) {
    DenseFieldGrid grid{GridShape{6, 7, 5}, {}};
    grid.values.resize(grid.shape.size());
    for (auto& v : grid.values) v = u(rng);
    const TriMesh mesh = marching_cubes(grid, 0.5);
    REQUIRE(!mesh.empty());
    CHECK(is_watertight(mesh));
    // Consistent orientation: each directed edge appears once.
    std::set<std::pair<int, int>> directed;
    bool unique = true;
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
      for (int k = 0; k < 3; ++k)
        unique &= directed.insert({mesh.faces(f, k), mesh.faces(f, (k + 1) % 3)}).second;
    CHECK(unique);
  }
}

TEST_CASE("marching cubes commutes with axis permutation") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  DenseFieldGrid grid{GridShape{6, 6, 6}, {}};
  grid.values.resize(grid.shape.size());
  for (auto& v : grid.values) v = u(rng);
  // Swap the depth and width axes (z <-> x).
  DenseFieldGrid swapped = grid;
  for (int d = 0; d < 6; ++d)
    for (int h = 0; h < 6; ++h)
      for (int w = 0; w < 6; ++w) swapped.values[grid.shape.index(w, h, d)] = grid.values[grid.shape.index(d, h, w)];
  const TriMesh a = marching_cubes(grid);
  const TriMesh b = marching_cubes(swapped);
  auto key = [](const Vector3d& p) {
    return std::make_tuple(std::llround(p.x() * 1e6), std::llround(p.y() * 1e6), std::llround(p.z() * 1e6));
  };
  std::set<std::tuple<long long, long long, long long>> va, vb;
  for (Eigen::Index i = 0; i < a.num_vertices(); ++i) {
    const Vector3d p = a.vertex(i);
    va.insert(key(Vector3d(p.z(), p.y(), p.x())));
  }
  for (Eigen::Index i = 0; i < b.num_vertices(); ++i) vb.insert(key(b.vertex(i)));
  CHECK(va == vb);
}

TEST_CASE("grid blob round trip") {
  const GridShape shape{2, 3, 4};
  std::vector<float> values(shape.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = float(i) * 0.5f;
  const auto path = std::filesystem::temp_directory_path() / "voxpix_grid.bin";
  write_grid_blob(path, shape, values);
  CHECK(std::filesystem::file_size(path) == 12 + 4 * values.size());
  const auto [s, v] = read_grid_blob(path);
  CHECK(s == shape);
  CHECK(v == values);
  std::filesystem::remove(path);
}

TEST_CASE("mesh_normal_map") {
  const WeakPerspectiveCamera cam(32.0, Vector2d(32, 32), 64, 64);
  SUBCASE("camera-facing quad") {
    const auto map = mesh_normal_map(quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.0), cam);
    CHECK(map.foreground_count() > 900);
    for (std::size_t i = 0; i < map.mask.size(); ++i) {
      if (!map.mask[i]) continue;
      CHECK((map.normals[i] - Vector3d(0, 0, 1)).norm() < 1e-9);
    }
  }
  SUBCASE("sphere center normal faces the camera") {
    const auto map = mesh_normal_map(icosphere(0.5, 4), cam);
    // Pixel (31,31) has center (31.5, 31.5), i.e. canonical (-1/64, 1/64).
    const Vector3d n = map.normals[31 * 64 + 31];
    CHECK(map.mask[31 * 64 + 31] == 1);
    const Vector3d analytic = Vector3d(-1.0 / 64, 1.0 / 64, std::sqrt(0.25 - 2.0 / 4096)).normalized();
    CHECK(n.dot(analytic) > std::cos(0.05));
  }
  SUBCASE("z-buffer keeps the nearer of two overlapping quads") {
    TriMesh near = quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.8);
    TriMesh far = quad_mesh(-0.3, -0.3, 0.7, 0.7, 0.2);
    // Tilt the far quad's normals so the two are distinguishable.
    for (Eigen::Index i = 0; i < far.normals.rows(); ++i) far.normals.row(i) = Eigen::RowVector3d(1, 0, 0);
    const auto map = mesh_normal_map(merge_meshes(far, near), cam);
    const int row = 32, col = 34;  // inside both
    CHECK((map.normals[row * 64 + col] - Vector3d(0, 0, 1)).norm() < 1e-9);
    const int row2 = 32 - 19, col2 = 32 + 19;  // only the far quad
    CHECK((map.normals[row2 * 64 + col2] - Vector3d(1, 0, 0)).norm() < 1e-9);
  }
}
