#pragma once

// Query-point features: multi-scale trilinear samples of the latent voxel grid,
// bilinear samples of the latent pixel map, and the raw depth.

#include <span>
#include <string>
#include <vector>

#include "voxpix/fieldcore.hpp"
#include "voxpix/nn.hpp"

namespace voxpix {

// [C, D, H, W]; depth runs along z, height along y (upward), width along x.
template <class T>
using LatentVoxelGrid = nn::Tensor<T>;

// [C, 1, H, W] over the input image; feature (i, j) is centered on image
// coordinate ((j + 0.5) * stride, (i + 0.5) * stride).
template <class T>
struct LatentPixelGrid {
  nn::Tensor<T> features;
  int stride = 1;
};

struct OffsetSet {
  double step = 0.0722;
  std::vector<int> scales{1, 2};
  bool include_negative = true;

  // Center first, then +x, -x, +y, -y, +z, -z per scale (negatives optional).
  std::vector<Vector3d> offsets() const;
  int size() const { return 1 + int(scales.size()) * (include_negative ? 6 : 3); }
};

// Continuous cell-center index of canonical coordinate p on an axis of n cells.
inline double grid_index(double p, int n) { return (p + 1.0) * 0.5 * n - 0.5; }

template <class T>
using FeatureRows = nn::Mat<T>;  // one row per query point

template <class T>
FeatureRows<T> trilinear_sample(const LatentVoxelGrid<T>& grid, std::span<const Vector3d> points);
// Adds the gradient of sum(grad_out .* trilinear_sample(grid, points)) to grad_grid.
template <class T>
void trilinear_backward(std::span<const Vector3d> points, const FeatureRows<T>& grad_out,
                        LatentVoxelGrid<T>& grad_grid);

template <class T>
FeatureRows<T> geometry_features(const LatentVoxelGrid<T>& grid, std::span<const Vector3d> points,
                                 const OffsetSet& offsets);
template <class T>
void geometry_backward(std::span<const Vector3d> points, const OffsetSet& offsets,
                       const FeatureRows<T>& grad_out, LatentVoxelGrid<T>& grad_grid);

template <class T>
FeatureRows<T> bilinear_sample(const LatentPixelGrid<T>& grid, std::span<const Vector2d> pixels);
template <class T>
void bilinear_backward(std::span<const Vector2d> pixels, int stride, const FeatureRows<T>& grad_out,
                       nn::Tensor<T>& grad_features);

// Column layout of a query encoding: [geometry | pixel | depth].
struct EncodingLayout {
  int offsets = 13;
  int voxel_channels = 8;
  int pixel_channels = 256;

  int geometry_width() const { return offsets * voxel_channels; }
  int pixel_begin() const { return geometry_width(); }
  int depth_column() const { return geometry_width() + pixel_channels; }
  int total() const { return depth_column() + 1; }
  std::string descriptor() const;  // "geometry:13x8|pixel:256|depth:1"
  bool operator==(const EncodingLayout&) const = default;
};

template <class T>
FeatureRows<T> build_encoding(const LatentVoxelGrid<T>& voxels, const LatentPixelGrid<T>& pixels,
                              const WeakPerspectiveCamera& camera, std::span<const Vector3d> points,
                              const OffsetSet& offsets);

// Routes d loss / d encoding back to the two latent grids.
template <class T>
void build_encoding_backward(const WeakPerspectiveCamera& camera, std::span<const Vector3d> points,
                             const OffsetSet& offsets, const EncodingLayout& layout,
                             const FeatureRows<T>& grad_encoding, LatentVoxelGrid<T>* grad_voxels,
                             LatentPixelGrid<T>* grad_pixels);

}  // namespace voxpix
