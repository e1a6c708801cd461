#include "voxpix/primitives.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <map>
#include <vector>

namespace voxpix {

namespace {

TriMesh from_lists(const std::vector<Vector3d>& v, const std::vector<Eigen::Vector3i>& f) {
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(i) = v[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) mesh.faces.row(i) = f[i].transpose();
  compute_vertex_normals(mesh);
  return mesh;
}

}  // namespace

TriMesh icosphere(double radius, int subdivisions, const Vector3d& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vector3d> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Eigen::Vector3i> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      next.emplace_back(tri[0], ab, ca);
      next.emplace_back(tri[1], bc, ab);
      next.emplace_back(tri[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    f = std::move(next);
  }
  for (auto& p : v) p = center + radius * p;
  TriMesh mesh = from_lists(v, f);
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
    mesh.normals.row(i) = (mesh.vertex(i) - center).normalized().transpose();
  }
  return mesh;
}

double icosphere_chord_error(double radius, int subdivisions) {
  // The worst facet is the one whose centroid is closest to the center.
  const TriMesh unit = icosphere(1.0, subdivisions);
  double closest = 1.0;
  for (Eigen::Index f = 0; f < unit.num_faces(); ++f) {
    const Vector3d a = unit.vertex(unit.faces(f, 0));
    const Vector3d n = unit.face_normal(f);
    closest = std::min(closest, std::abs(n.dot(a)));
  }
  return radius * (1.0 - closest);
}

TriMesh box_mesh(const Vector3d& lo, const Vector3d& hi) {
  std::vector<Vector3d> v;
  for (int c = 0; c < 8; ++c) {
    v.emplace_back(c & 1 ? hi.x() : lo.x(), c & 2 ? hi.y() : lo.y(), c & 4 ? hi.z() : lo.z());
  }
  const std::vector<Eigen::Vector3i> f = {
      {0, 2, 3}, {0, 3, 1},   // z = lo
      {4, 5, 7}, {4, 7, 6},   // z = hi
      {0, 1, 5}, {0, 5, 4},   // y = lo
      {2, 6, 7}, {2, 7, 3},   // y = hi
      {0, 4, 6}, {0, 6, 2},   // x = lo
      {1, 3, 7}, {1, 7, 5}};  // x = hi
  return from_lists(v, f);
}

TriMesh quad_mesh(double x0, double y0, double x1, double y1, double depth) {
  const std::vector<Vector3d> v = {{x0, y0, depth}, {x1, y0, depth}, {x1, y1, depth},
                                   {x0, y1, depth}};
  return from_lists(v, {{0, 1, 2}, {0, 2, 3}});
}

TriMesh merge_meshes(const TriMesh& a, const TriMesh& b) {
  TriMesh out;
  out.vertices.resize(a.num_vertices() + b.num_vertices(), 3);
  out.vertices << a.vertices, b.vertices;
  out.faces.resize(a.num_faces() + b.num_faces(), 3);
  out.faces.topRows(a.num_faces()) = a.faces;
  out.faces.bottomRows(b.num_faces()) =
      b.faces.array() + static_cast<int>(a.num_vertices());
  if (a.normals.rows() == a.num_vertices() && b.normals.rows() == b.num_vertices()) {
    out.normals.resize(out.vertices.rows(), 3);
    out.normals << a.normals, b.normals;
  } else {
    compute_vertex_normals(out);
  }
  return out;
}

}  // namespace voxpix
