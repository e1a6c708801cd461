#pragma once

// Canonical frame, camera model and the value types shared by the pipeline.
//
// Frame convention: x points to image right, y points up, z points toward the
// camera. Image rows grow downward, so row = pp.y - scale * y.

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxpix/error.hpp"

namespace voxpix {

using Eigen::Vector2d;
using Eigen::Vector3d;
using MatrixX3d = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatrixX3i = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Triangle mesh in libigl layout: one row per vertex / face / vertex normal.
// Canonical meshes live in [-1,1]^3 and carry unit vertex normals.
struct TriMesh {
  MatrixX3d vertices;
  MatrixX3i faces;
  MatrixX3d normals;

  Eigen::Index num_vertices() const { return vertices.rows(); }
  Eigen::Index num_faces() const { return faces.rows(); }
  bool empty() const { return faces.rows() == 0; }

  Vector3d vertex(Eigen::Index i) const { return vertices.row(i).transpose(); }
  Vector3d face_normal(Eigen::Index f) const;  // unit, zero for degenerate faces
  double face_area(Eigen::Index f) const;
};

using CanonicalMesh = TriMesh;

struct BoundingBox {
  Vector3d min = Vector3d::Constant(std::numeric_limits<double>::infinity());
  Vector3d max = Vector3d::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vector3d& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Vector3d extent() const { return max - min; }
  Vector3d center() const { return 0.5 * (min + max); }
};

BoundingBox bounding_box(const TriMesh& mesh);

// Area-weighted, unit length. Vertices with no incident area get +z.
void compute_vertex_normals(TriMesh& mesh);

// Returns a boundary or non-manifold edge (vertex pair) if any exists.
std::optional<std::pair<int, int>> find_open_edge(const TriMesh& mesh);
bool is_watertight(const TriMesh& mesh);
// Throws ErrorKind::non_watertight naming the first offending edge.
void require_watertight(const TriMesh& mesh, std::string_view context);

// Euler characteristic V - E + F over referenced vertices.
long euler_characteristic(const TriMesh& mesh);

// canonical = scale * raw + translation.
struct TransformRecord {
  double scale = 1.0;
  Vector3d translation = Vector3d::Zero();

  Vector3d apply(const Vector3d& raw) const { return scale * raw + translation; }
  Vector3d invert(const Vector3d& canonical) const {
    return (canonical - translation) / scale;
  }
  std::string to_line() const;  // "scale tx ty tz"
  static TransformRecord from_line(const std::string& line);
};

struct Normalized {
  CanonicalMesh mesh;
  TransformRecord transform;
};

// Uniformly scales and centers the mesh into [-(1-padding), 1-padding]^3.
Normalized normalize_mesh(const TriMesh& raw, double padding);

// Weak-perspective (scaled orthographic) camera looking down -z.
class WeakPerspectiveCamera {
 public:
  WeakPerspectiveCamera(double scale, Vector2d principal_point, int width, int height);

  // The fixed camera used by the procedural dataset: 64 px per canonical unit,
  // canonical origin at the center of a 128 x 192 image.
  static WeakPerspectiveCamera standard();

  double scale() const { return scale_; }
  const Vector2d& principal_point() const { return pp_; }
  int width() const { return width_; }
  int height() const { return height_; }

  std::string to_line() const;  // "scale ppx ppy width height"
  static WeakPerspectiveCamera from_line(const std::string& line);

  bool operator==(const WeakPerspectiveCamera&) const = default;

 private:
  double scale_;
  Vector2d pp_;
  int width_;
  int height_;
};

struct Projection {
  Vector2d pixel;
  double depth;
};

inline Projection project(const WeakPerspectiveCamera& camera, const Vector3d& p) {
  return {Vector2d(camera.principal_point().x() + camera.scale() * p.x(),
                   camera.principal_point().y() - camera.scale() * p.y()),
          p.z()};
}

// Inverse of project for the (x, y) part.
inline Vector2d unproject_xy(const WeakPerspectiveCamera& camera, const Vector2d& pixel) {
  return {(pixel.x() - camera.principal_point().x()) / camera.scale(),
          (camera.principal_point().y() - pixel.y()) / camera.scale()};
}

// Occupancy labels are {0,1} with the surface at 0.5; the signed form used in
// the literature is sigma = 2 o - 1 (inside positive, surface at 0).
constexpr double occupancy_to_sigma(double occupancy) { return 2.0 * occupancy - 1.0; }
constexpr double sigma_to_occupancy(double sigma) { return 0.5 * (sigma + 1.0); }

struct QuerySample {
  Vector3d position;
  float occupancy;  // exactly 0 or 1
};

// Planar RGB image with values in [0,1] plus a foreground mask.
struct ImageSample {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;          // [3][height][width]
  std::vector<std::uint8_t> mask;     // [height][width]

  ImageSample() = default;
  ImageSample(int w, int h)
      : width(w), height(h), pixels(3 * std::size_t(w) * h, 0.0f), mask(std::size_t(w) * h, 0) {}

  float& at(int channel, int row, int col) {
    return pixels[(std::size_t(channel) * height + row) * width + col];
  }
  float at(int channel, int row, int col) const {
    return pixels[(std::size_t(channel) * height + row) * width + col];
  }
  std::uint8_t& mask_at(int row, int col) { return mask[std::size_t(row) * width + col]; }
  std::uint8_t mask_at(int row, int col) const { return mask[std::size_t(row) * width + col]; }
};

// Wavefront OBJ: v / vn / f records. Faces with normals use "f a//a b//b c//c".
void write_obj(const std::filesystem::path& path, const TriMesh& mesh);
std::string obj_string(const TriMesh& mesh);
TriMesh read_obj(const std::filesystem::path& path);

}  // namespace voxpix
