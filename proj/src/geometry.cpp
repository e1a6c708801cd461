#include "voxpix/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

namespace voxpix {

static_assert(std::endian::native == std::endian::little,
              "grid blobs are written in host order and must be little-endian");

double CoarseOccupancyVolume::occupied_fraction() const {
  if (values.empty()) return 0.0;
  std::size_t count = 0;
  for (float v : values) count += v >= 0.5f;
  return static_cast<double>(count) / static_cast<double>(values.size());
}

void write_grid_blob(const std::filesystem::path& path, const GridShape& shape,
                     std::span<const float> values) {
  if (values.size() != shape.size()) {
    throw Error(ErrorKind::shape_mismatch, "grid blob: value count does not match dims");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open for writing: " + path.string());
  const std::int32_t dims[3] = {shape.depth, shape.height, shape.width};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

std::pair<GridShape, std::vector<float>> read_grid_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open: " + path.string());
  std::int32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    throw Error(ErrorKind::io, "malformed grid blob header: " + path.string());
  }
  GridShape shape{dims[0], dims[1], dims[2]};
  std::vector<float> values(shape.size());
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw Error(ErrorKind::io, "truncated grid blob: " + path.string());
  return {shape, std::move(values)};
}

// ---------------------------------------------------------------------------
// Inside test

namespace {

constexpr double kGrazeEps = 1e-10;

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

const std::array<Vector3d, 6>& jitter_directions() {
  static const std::array<Vector3d, 6> dirs = [] {
    std::array<Vector3d, 6> d = {Vector3d(1.0, 0.1373, 0.2911), Vector3d(0.1931, 1.0, -0.3467),
                                 Vector3d(-0.2713, 0.1531, 1.0), Vector3d(1.0, -0.4123, 0.0719),
                                 Vector3d(-0.0613, 0.9, 0.4717), Vector3d(0.3319, -0.2207, -1.0)};
    for (auto& v : d) v.normalize();
    return d;
  }();
  return dirs;
}

}  // namespace

InsideTester::InsideTester(const TriMesh& mesh) : mesh_(mesh), box_(bounding_box(mesh)) {
  const auto faces = static_cast<double>(mesh.num_faces());
  const int cells = std::clamp(static_cast<int>(std::sqrt(faces / 2.0)), 1, 256);
  cells_y_ = cells;
  cells_z_ = cells;
  buckets_.resize(std::size_t(cells_y_) * cells_z_);
  const double ey = std::max(box_.extent().y(), 1e-12);
  const double ez = std::max(box_.extent().z(), 1e-12);
  auto cell_of = [](double v, double lo, double extent, int n) {
    return std::clamp(static_cast<int>((v - lo) / extent * n), 0, n - 1);
  };
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo, zlo = ylo, zhi = -ylo;
    for (int k = 0; k < 3; ++k) {
      const Vector3d v = mesh.vertex(mesh.faces(f, k));
      ylo = std::min(ylo, v.y());
      yhi = std::max(yhi, v.y());
      zlo = std::min(zlo, v.z());
      zhi = std::max(zhi, v.z());
    }
    const int y0 = cell_of(ylo - 1e-9, box_.min.y(), ey, cells_y_);
    const int y1 = cell_of(yhi + 1e-9, box_.min.y(), ey, cells_y_);
    const int z0 = cell_of(zlo - 1e-9, box_.min.z(), ez, cells_z_);
    const int z1 = cell_of(zhi + 1e-9, box_.min.z(), ez, cells_z_);
    for (int cy = y0; cy <= y1; ++cy) {
      for (int cz = z0; cz <= z1; ++cz) {
        buckets_[std::size_t(cy) * cells_z_ + cz].push_back(static_cast<int>(f));
      }
    }
  }
}

int InsideTester::count_axis_crossings(const Vector3d& p, bool& grazing) const {
  grazing = false;
  const double ey = std::max(box_.extent().y(), 1e-12);
  const double ez = std::max(box_.extent().z(), 1e-12);
  const int cy = std::clamp(static_cast<int>((p.y() - box_.min.y()) / ey * cells_y_), 0, cells_y_ - 1);
  const int cz = std::clamp(static_cast<int>((p.z() - box_.min.z()) / ez * cells_z_), 0, cells_z_ - 1);
  int crossings = 0;
  for (int f : buckets_[std::size_t(cy) * cells_z_ + cz]) {
    const Vector3d a = mesh_.vertex(mesh_.faces(f, 0));
    const Vector3d b = mesh_.vertex(mesh_.faces(f, 1));
    const Vector3d c = mesh_.vertex(mesh_.faces(f, 2));
    if (std::max({a.x(), b.x(), c.x()}) < p.x()) continue;
    const double det = cross2(b.y() - a.y(), b.z() - a.z(), c.y() - a.y(), c.z() - a.z());
    if (det == 0.0) continue;  // edge-on; neighbours register the graze
    const double wa = cross2(b.y() - p.y(), b.z() - p.z(), c.y() - p.y(), c.z() - p.z()) / det;
    const double wb = cross2(c.y() - p.y(), c.z() - p.z(), a.y() - p.y(), a.z() - p.z()) / det;
    const double wc = 1.0 - wa - wb;
    const double lowest = std::min({wa, wb, wc});
    if (lowest < -kGrazeEps) continue;
    const double hit_x = wa * a.x() + wb * b.x() + wc * c.x();
    if (hit_x <= p.x()) continue;
    if (lowest <= kGrazeEps) {
      grazing = true;
      return 0;
    }
    ++crossings;
  }
  return crossings;
}

int InsideTester::count_crossings(const Vector3d& p, const Vector3d& dir, bool& grazing) const {
  grazing = false;
  int crossings = 0;
  for (Eigen::Index f = 0; f < mesh_.num_faces(); ++f) {
    const Vector3d a = mesh_.vertex(mesh_.faces(f, 0));
    const Vector3d e1 = mesh_.vertex(mesh_.faces(f, 1)) - a;
    const Vector3d e2 = mesh_.vertex(mesh_.faces(f, 2)) - a;
    const Vector3d pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-300) continue;
    const Vector3d tvec = p - a;
    const double u = tvec.dot(pvec) / det;
    const Vector3d qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) / det;
    const double t = e2.dot(qvec) / det;
    if (t <= 0.0) continue;
    const double lowest = std::min({u, v, 1.0 - u - v});
    if (lowest < -kGrazeEps) continue;
    if (lowest <= kGrazeEps) {
      grazing = true;
      return 0;
    }
    ++crossings;
  }
  return crossings;
}

bool InsideTester::contains(const Vector3d& p) const {
  if ((p.array() < box_.min.array()).any() || (p.array() > box_.max.array()).any()) return false;
  bool grazing = false;
  int crossings = count_axis_crossings(p, grazing);
  for (const Vector3d& dir : jitter_directions()) {
    if (!grazing) break;
    crossings = count_crossings(p, dir, grazing);
  }
  return (crossings & 1) == 1;
}

std::vector<std::uint8_t> point_in_mesh(const TriMesh& mesh, std::span<const Vector3d> points) {
  require_watertight(mesh, "point_in_mesh");
  InsideTester tester(mesh);
  std::vector<std::uint8_t> labels(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) labels[i] = tester.contains(points[i]) ? 1 : 0;
  return labels;
}

CoarseOccupancyVolume voxelize_coarse(const TriMesh& mesh, GridShape shape) {
  if (shape.depth < 1 || shape.height < 1 || shape.width < 1) {
    throw Error(ErrorKind::invalid_argument, "voxelize_coarse: empty grid shape");
  }
  std::vector<Vector3d> centers;
  centers.reserve(shape.size());
  for (int d = 0; d < shape.depth; ++d)
    for (int h = 0; h < shape.height; ++h)
      for (int w = 0; w < shape.width; ++w) centers.push_back(shape.cell_center(d, h, w));
  const auto labels = point_in_mesh(mesh, centers);
  CoarseOccupancyVolume volume;
  volume.shape = shape;
  volume.kind = CoarseOccupancyVolume::Kind::labels;
  volume.values.assign(labels.begin(), labels.end());
  return volume;
}

SurfaceSamples sample_surface(const TriMesh& mesh, int count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::invalid_argument, "sample_surface: count must be >= 1");
  std::vector<double> cdf(static_cast<std::size_t>(mesh.num_faces()));
  double total = 0.0;
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::degenerate, "sample_surface: mesh has zero area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  SurfaceSamples out;
  out.points.reserve(count);
  out.normals.reserve(count);
  out.faces.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double pick = uniform(rng) * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    const int f = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
    const double r1 = std::sqrt(uniform(rng));
    const double r2 = uniform(rng);
    const Vector3d a = mesh.vertex(mesh.faces(f, 0));
    const Vector3d b = mesh.vertex(mesh.faces(f, 1));
    const Vector3d c = mesh.vertex(mesh.faces(f, 2));
    out.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    out.normals.push_back(mesh.face_normal(f));
    out.faces.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Marching cubes
//
// Corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1). Edge e = 4 * axis + slot
// joins a corner with its neighbour along that axis. The 256-case table is
// generated by tracing, on every cube face, the segments that separate inside
// from outside corners; ambiguous faces always separate the inside corners. The
// rule only looks at the corners of the face, so adjacent cubes agree on their
// shared boundary and the output is crack-free.

namespace {

struct CubeTopology {
  std::array<std::array<int, 2>, 12> edge_corners{};
  std::array<int, 12> edge_axis{};
};

const CubeTopology& cube_topology() {
  static const CubeTopology topo = [] {
    CubeTopology t;
    for (int axis = 0; axis < 3; ++axis) {
      int slot = 0;
      for (int c = 0; c < 8; ++c) {
        if (c & (1 << axis)) continue;
        t.edge_corners[4 * axis + slot] = {c, c | (1 << axis)};
        t.edge_axis[4 * axis + slot] = axis;
        ++slot;
      }
    }
    return t;
  }();
  return topo;
}

Vector3d corner_position(int c) { return Vector3d(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

int edge_between(int c0, int c1) {
  const auto& topo = cube_topology();
  for (int e = 0; e < 12; ++e) {
    const auto& ec = topo.edge_corners[e];
    if ((ec[0] == c0 && ec[1] == c1) || (ec[0] == c1 && ec[1] == c0)) return e;
  }
  throw std::logic_error("corners are not adjacent");
}

bool edges_share_face(int e1, int e2) {
  const auto& topo = cube_topology();
  auto faces_of = [&](int e) {
    const int axis = topo.edge_axis[e];
    const int c0 = topo.edge_corners[e][0];
    std::array<int, 2> ids{};
    int k = 0;
    for (int b = 0; b < 3; ++b) {
      if (b != axis) ids[k++] = 2 * b + ((c0 >> b) & 1);
    }
    return ids;
  };
  const auto f1 = faces_of(e1), f2 = faces_of(e2);
  return f1[0] == f2[0] || f1[0] == f2[1] || f1[1] == f2[0] || f1[1] == f2[1];
}

Vector3d edge_midpoint(int e) {
  const auto& ec = cube_topology().edge_corners[e];
  return 0.5 * (corner_position(ec[0]) + corner_position(ec[1]));
}

McCase triangulate_case(int mask) {
  std::array<int, 12> next;
  next.fill(-1);
  auto inside = [mask](int c) { return ((mask >> c) & 1) != 0; };

  auto add_segment = [&](int e1, int e2, const Vector3d& toward_outside, const Vector3d& face_normal) {
    const Vector3d tangent = toward_outside.cross(face_normal);
    if ((edge_midpoint(e2) - edge_midpoint(e1)).dot(tangent) < 0.0) std::swap(e1, e2);
    if (next[e1] != -1) throw std::logic_error("marching cubes table: edge reused");
    next[e1] = e2;
  };

  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      std::array<int, 4> corners;
      const int bits[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
      for (int k = 0; k < 4; ++k) {
        corners[k] = (side << axis) | (bits[k][0] << u) | (bits[k][1] << v);
      }
      Vector3d face_normal = Vector3d::Zero();
      face_normal[axis] = side ? 1.0 : -1.0;

      std::vector<int> crossing_slots;
      for (int k = 0; k < 4; ++k) {
        if (inside(corners[k]) != inside(corners[(k + 1) % 4])) crossing_slots.push_back(k);
      }
      auto face_edge = [&](int k) { return edge_between(corners[k], corners[(k + 1) % 4]); };

      if (crossing_slots.size() == 2) {
        Vector3d in_sum = Vector3d::Zero(), out_sum = Vector3d::Zero();
        int n_in = 0, n_out = 0;
        for (int c : corners) {
          if (inside(c)) {
            in_sum += corner_position(c);
            ++n_in;
          } else {
            out_sum += corner_position(c);
            ++n_out;
          }
        }
        add_segment(face_edge(crossing_slots[0]), face_edge(crossing_slots[1]),
                    out_sum / n_out - in_sum / n_in, face_normal);
      } else if (crossing_slots.size() == 4) {
        Vector3d center = Vector3d::Zero();
        for (int c : corners) center += 0.25 * corner_position(c);
        for (int k = 0; k < 4; ++k) {
          if (!inside(corners[k])) continue;
          add_segment(face_edge((k + 3) % 4), face_edge(k), center - corner_position(corners[k]),
                      face_normal);
        }
      }
    }
  }

  McCase result;
  std::array<bool, 12> visited{};
  for (int start = 0; start < 12; ++start) {
    if (next[start] == -1 || visited[start]) continue;
    std::vector<int> loop;
    for (int e = start; !visited[e]; e = next[e]) {
      if (next[e] == -1) throw std::logic_error("marching cubes table: open loop");
      visited[e] = true;
      loop.push_back(e);
    }
    const int n = static_cast<int>(loop.size());
    // A fan diagonal joining two vertices of one cube face could coincide with
    // the neighbouring cube's diagonal, so such apexes are skipped.
    int apex = -1;
    for (int i = 0; i < n && apex < 0; ++i) {
      bool ok = true;
      for (int j = 0; j < n && ok; ++j) {
        if (j == i || j == (i + 1) % n || j == (i + n - 1) % n) continue;
        ok = !edges_share_face(loop[i], loop[j]);
      }
      if (ok) apex = i;
    }
    if (apex >= 0) {
      for (int k = 1; k + 1 < n; ++k) {
        result.triangles.push_back(
            {loop[apex], loop[(apex + k) % n], loop[(apex + k + 1) % n]});
      }
    } else {
      const int center = 12 + static_cast<int>(result.center_loops.size());
      result.center_loops.push_back(loop);
      for (int k = 0; k < n; ++k) result.triangles.push_back({center, loop[k], loop[(k + 1) % n]});
    }
  }
  return result;
}

}  // namespace

const std::vector<McCase>& marching_cubes_table() {
  static const std::vector<McCase> table = [] {
    std::vector<McCase> t(256);
    for (int mask = 0; mask < 256; ++mask) t[mask] = triangulate_case(mask);
    return t;
  }();
  return table;
}

TriMesh marching_cubes_lattice(std::span<const float> values, const GridShape& dims,
                               const Vector3d& origin, const Vector3d& spacing, double iso) {
  if (dims.depth < 2 || dims.height < 2 || dims.width < 2) {
    throw Error(ErrorKind::invalid_argument, "marching_cubes: lattice needs >= 2 nodes per axis");
  }
  if (values.size() != dims.size()) {
    throw Error(ErrorKind::shape_mismatch, "marching_cubes: value count does not match lattice");
  }
  const auto& table = marching_cubes_table();
  const auto& topo = cube_topology();

  std::vector<Vector3d> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::unordered_map<std::size_t, int> edge_vertex;

  auto node_value = [&](int d, int h, int w) { return double(values[dims.index(d, h, w)]); };

  for (int d = 0; d + 1 < dims.depth; ++d) {
    for (int h = 0; h + 1 < dims.height; ++h) {
      for (int w = 0; w + 1 < dims.width; ++w) {
        std::array<double, 8> corner_values;
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          corner_values[c] = node_value(d + ((c >> 2) & 1), h + ((c >> 1) & 1), w + (c & 1));
          if (corner_values[c] > iso) mask |= 1 << c;
        }
        if (mask == 0 || mask == 255) continue;

        std::array<int, 12> local{};
        local.fill(-1);
        auto vertex_for_edge = [&](int e) {
          if (local[e] >= 0) return local[e];
          const int c0 = topo.edge_corners[e][0];
          const int c1 = topo.edge_corners[e][1];
          const int nd = d + ((c0 >> 2) & 1), nh = h + ((c0 >> 1) & 1), nw = w + (c0 & 1);
          const std::size_t key = dims.index(nd, nh, nw) * 3 + topo.edge_axis[e];
          auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(vertices.size()));
          if (inserted) {
            const double v0 = corner_values[c0], v1 = corner_values[c1];
            const double t = v1 != v0 ? std::clamp((iso - v0) / (v1 - v0), 0.0, 1.0) : 0.5;
            Vector3d p0(nw, nh, nd);
            Vector3d p = p0;
            p[topo.edge_axis[e]] += t;
            vertices.push_back(origin + p.cwiseProduct(spacing));
          }
          local[e] = it->second;
          return it->second;
        };

        const McCase& entry = table[mask];
        std::array<int, 4> centers{};
        for (std::size_t k = 0; k < entry.center_loops.size(); ++k) {
          Vector3d sum = Vector3d::Zero();
          for (int e : entry.center_loops[k]) sum += vertices[vertex_for_edge(e)];
          centers[k] = static_cast<int>(vertices.size());
          vertices.push_back(sum / static_cast<double>(entry.center_loops[k].size()));
        }
        auto resolve = [&](int id) { return id < 12 ? vertex_for_edge(id) : centers[id - 12]; };
        for (const auto& tri : entry.triangles) {
          faces.emplace_back(resolve(tri[0]), resolve(tri[1]), resolve(tri[2]));
        }
      }
    }
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(vertices.size()), 3);
  for (std::size_t i = 0; i < vertices.size(); ++i) mesh.vertices.row(i) = vertices[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i].transpose();
  compute_vertex_normals(mesh);
  return mesh;
}

TriMesh marching_cubes(const DenseFieldGrid& grid, double iso) {
  const GridShape& s = grid.shape;
  if (s.depth < 2 || s.height < 2 || s.width < 2) {
    throw Error(ErrorKind::invalid_argument, "marching_cubes: grid resolution must be >= 2 per axis");
  }
  if (grid.values.size() != s.size()) {
    throw Error(ErrorKind::shape_mismatch, "marching_cubes: value count does not match resolution");
  }
  const GridShape padded{s.depth + 2, s.height + 2, s.width + 2};
  std::vector<float> values(padded.size(), 0.0f);
  for (int d = 0; d < s.depth; ++d)
    for (int h = 0; h < s.height; ++h)
      for (int w = 0; w < s.width; ++w)
        values[padded.index(d + 1, h + 1, w + 1)] = grid.values[s.index(d, h, w)];
  const Vector3d spacing = s.cell_spacing();
  // First real node is the first cell center; the pad sits one spacing outward.
  const Vector3d origin = Vector3d::Constant(-1.0) + 0.5 * spacing - spacing;
  return marching_cubes_lattice(values, padded, origin, spacing, iso);
}

// ---------------------------------------------------------------------------
// Rasterization

Raster rasterize(const TriMesh& mesh, const WeakPerspectiveCamera& camera) {
  Raster r;
  r.width = camera.width();
  r.height = camera.height();
  const std::size_t n = std::size_t(r.width) * r.height;
  r.face.assign(n, -1);
  r.barycentric.assign(n, Vector3d::Zero());
  r.depth.assign(n, -std::numeric_limits<double>::infinity());

  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    std::array<Projection, 3> p;
    for (int k = 0; k < 3; ++k) p[k] = project(camera, mesh.vertex(mesh.faces(f, k)));
    const Vector2d& a = p[0].pixel;
    const Vector2d& b = p[1].pixel;
    const Vector2d& c = p[2].pixel;
    const double det = cross2(b.x() - a.x(), b.y() - a.y(), c.x() - a.x(), c.y() - a.y());
    if (std::abs(det) < 1e-14) continue;
    const double xmin = std::min({a.x(), b.x(), c.x()}), xmax = std::max({a.x(), b.x(), c.x()});
    const double ymin = std::min({a.y(), b.y(), c.y()}), ymax = std::max({a.y(), b.y(), c.y()});
    const int col0 = std::max(0, static_cast<int>(std::ceil(xmin - 0.5)));
    const int col1 = std::min(r.width - 1, static_cast<int>(std::floor(xmax - 0.5)));
    const int row0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
    const int row1 = std::min(r.height - 1, static_cast<int>(std::floor(ymax - 0.5)));
    for (int row = row0; row <= row1; ++row) {
      const double y = row + 0.5;
      for (int col = col0; col <= col1; ++col) {
        const double x = col + 0.5;
        const double wa = cross2(b.x() - x, b.y() - y, c.x() - x, c.y() - y) / det;
        const double wb = cross2(c.x() - x, c.y() - y, a.x() - x, a.y() - y) / det;
        const double wc = 1.0 - wa - wb;
        if (wa < -1e-9 || wb < -1e-9 || wc < -1e-9) continue;
        const double z = wa * p[0].depth + wb * p[1].depth + wc * p[2].depth;
        const std::size_t idx = std::size_t(row) * r.width + col;
        if (z > r.depth[idx]) {
          r.depth[idx] = z;
          r.face[idx] = static_cast<int>(f);
          r.barycentric[idx] = Vector3d(wa, wb, wc);
        }
      }
    }
  }
  return r;
}

std::size_t NormalMap::foreground_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

NormalMap normal_map_from_raster(const TriMesh& mesh, const Raster& raster) {
  NormalMap map;
  map.width = raster.width;
  map.height = raster.height;
  const std::size_t n = std::size_t(map.width) * map.height;
  map.normals.assign(n, Vector3d::Zero());
  map.mask.assign(n, 0);
  const bool smooth = mesh.normals.rows() == mesh.vertices.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const int f = raster.face[i];
    if (f < 0) continue;
    Vector3d normal = Vector3d::Zero();
    if (smooth) {
      for (int k = 0; k < 3; ++k) {
        normal += raster.barycentric[i][k] * mesh.normals.row(mesh.faces(f, k)).transpose();
      }
    }
    if (normal.norm() < 1e-12) normal = mesh.face_normal(f);
    if (normal.norm() < 1e-12) continue;
    map.normals[i] = normal.normalized();
    map.mask[i] = 1;
  }
  return map;
}

NormalMap mesh_normal_map(const TriMesh& mesh, const WeakPerspectiveCamera& camera) {
  return normal_map_from_raster(mesh, rasterize(mesh, camera));
}

}  // namespace voxpix
