#pragma once

// Inside/outside testing, voxelization, surface sampling, isosurface extraction
// and z-buffered rasterization under the weak-perspective camera.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxpix/fieldcore.hpp"

namespace voxpix {

// Depth x height x width lattice over [-1,1]^3; depth runs along z, height
// along y, width along x. Cell centers sit on a uniform partition per axis.
struct GridShape {
  int depth = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const { return std::size_t(depth) * height * width; }
  std::size_t index(int d, int h, int w) const {
    return (std::size_t(d) * height + h) * width + w;
  }
  Vector3d cell_center(int d, int h, int w) const {
    return {-1.0 + (w + 0.5) * 2.0 / width, -1.0 + (h + 0.5) * 2.0 / height,
            -1.0 + (d + 0.5) * 2.0 / depth};
  }
  Vector3d cell_spacing() const { return {2.0 / width, 2.0 / height, 2.0 / depth}; }
  bool operator==(const GridShape&) const = default;
};

inline constexpr GridShape kCoarseShape{32, 48, 32};

struct CoarseOccupancyVolume {
  enum class Kind { labels, probabilities };

  GridShape shape;
  Kind kind = Kind::labels;
  std::vector<float> values;

  float at(int d, int h, int w) const { return values[shape.index(d, h, w)]; }
  double occupied_fraction() const;
};

struct DenseFieldGrid {
  GridShape shape;
  std::vector<float> values;  // occupancy probabilities

  Vector3d cell_spacing() const { return shape.cell_spacing(); }
};

// Binary blob: three little-endian int32 dims (depth, height, width) followed
// by row-major float32 values.
void write_grid_blob(const std::filesystem::path& path, const GridShape& shape,
                     std::span<const float> values);
std::pair<GridShape, std::vector<float>> read_grid_blob(const std::filesystem::path& path);

// Ray-parity inside test against a watertight mesh. Rays run along +x; a ray
// grazing an edge or vertex is re-cast in a deterministically jittered
// direction.
class InsideTester {
 public:
  explicit InsideTester(const TriMesh& mesh);

  bool contains(const Vector3d& p) const;

 private:
  int count_axis_crossings(const Vector3d& p, bool& grazing) const;
  int count_crossings(const Vector3d& p, const Vector3d& dir, bool& grazing) const;

  const TriMesh& mesh_;
  BoundingBox box_;
  int cells_y_ = 1;
  int cells_z_ = 1;
  std::vector<std::vector<int>> buckets_;  // triangles by (y, z) footprint
};

std::vector<std::uint8_t> point_in_mesh(const TriMesh& mesh, std::span<const Vector3d> points);

CoarseOccupancyVolume voxelize_coarse(const TriMesh& mesh, GridShape shape = kCoarseShape);

struct SurfaceSamples {
  std::vector<Vector3d> points;
  std::vector<Vector3d> normals;  // face normals
  std::vector<int> faces;
};

SurfaceSamples sample_surface(const TriMesh& mesh, int count, std::uint64_t seed);

// Marching cubes over lattice nodes; node (d,h,w) sits at
// origin + (w*spacing.x, h*spacing.y, d*spacing.z). Nodes with value > iso are
// inside. Triangles face away from the inside region.
TriMesh marching_cubes_lattice(std::span<const float> values, const GridShape& dims,
                               const Vector3d& origin, const Vector3d& spacing, double iso);

// Extracts the iso-surface of a dense field sampled at cell centers. The field
// is padded by one unoccupied layer, so the result is closed.
TriMesh marching_cubes(const DenseFieldGrid& grid, double iso = 0.5);

// One entry of the 256-case table. Triangle indices below 12 name cube edges;
// index 12 + k names the centroid of center_loops[k], used for loops that
// cannot be fanned without a diagonal lying in a cube face.
struct McCase {
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::vector<int>> center_loops;
};

const std::vector<McCase>& marching_cubes_table();

// Rasterization with a z-buffer; the camera looks down -z so larger z wins.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<int> face;                 // -1 for background
  std::vector<Eigen::Vector3d> barycentric;
  std::vector<double> depth;

  bool covered(int row, int col) const { return face[std::size_t(row) * width + col] >= 0; }
};

Raster rasterize(const TriMesh& mesh, const WeakPerspectiveCamera& camera);

struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<Vector3d> normals;  // zero where masked out
  std::vector<std::uint8_t> mask;

  std::size_t foreground_count() const;
};

NormalMap mesh_normal_map(const TriMesh& mesh, const WeakPerspectiveCamera& camera);
NormalMap normal_map_from_raster(const TriMesh& mesh, const Raster& raster);

}  // namespace voxpix
