#include "voxpix/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace voxpix {

std::vector<Vector3d> OffsetSet::offsets() const {
  std::vector<Vector3d> out{Vector3d::Zero()};
  for (int s : scales) {
    const double len = s * step;
    for (int axis = 0; axis < 3; ++axis) {
      Vector3d e = Vector3d::Zero();
      e[axis] = len;
      out.push_back(e);
      if (include_negative) out.push_back(-e);
    }
  }
  return out;
}

std::string EncodingLayout::descriptor() const {
  std::ostringstream s;
  s << "geometry:" << offsets << 'x' << voxel_channels << "|pixel:" << pixel_channels << "|depth:1";
  return s.str();
}

namespace {

// Lower corner and fractional weight of a border-clamped linear stencil.
struct Axis {
  int i0, i1;
  double t;
};

Axis clamp_axis(double f, int n) {
  if (n == 1) return {0, 0, 0.0};
  f = std::clamp(f, 0.0, double(n - 1));
  const int i0 = std::min(int(std::floor(f)), n - 2);
  return {i0, i0 + 1, f - i0};
}

struct Stencil3 {
  std::size_t index[8];
  double weight[8];
};

template <class T>
Stencil3 stencil(const LatentVoxelGrid<T>& g, const Vector3d& p) {
  const Axis ax = clamp_axis(grid_index(p.x(), g.w), g.w);
  const Axis ay = clamp_axis(grid_index(p.y(), g.h), g.h);
  const Axis az = clamp_axis(grid_index(p.z(), g.d), g.d);
  Stencil3 s;
  int k = 0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx, ++k) {
        const int z = dz ? az.i1 : az.i0, y = dy ? ay.i1 : ay.i0, x = dx ? ax.i1 : ax.i0;
        s.index[k] = (std::size_t(z) * g.h + y) * g.w + x;
        s.weight[k] = (dz ? az.t : 1 - az.t) * (dy ? ay.t : 1 - ay.t) * (dx ? ax.t : 1 - ax.t);
      }
    }
  }
  return s;
}

struct Stencil2 {
  std::size_t index[4];
  double weight[4];
};

template <class T>
Stencil2 stencil(const nn::Tensor<T>& f, int stride, const Vector2d& px) {
  const Axis ax = clamp_axis(px.x() / stride - 0.5, f.w);
  const Axis ay = clamp_axis(px.y() / stride - 0.5, f.h);
  Stencil2 s;
  int k = 0;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx, ++k) {
      s.index[k] = std::size_t(dy ? ay.i1 : ay.i0) * f.w + (dx ? ax.i1 : ax.i0);
      s.weight[k] = (dy ? ay.t : 1 - ay.t) * (dx ? ax.t : 1 - ax.t);
    }
  }
  return s;
}

template <class T>
void sample_into(const LatentVoxelGrid<T>& g, const Vector3d& p, T* out) {
  const Stencil3 s = stencil(g, p);
  const std::size_t plane = g.voxels();
  for (int c = 0; c < g.c; ++c) {
    const T* ch = g.data.data() + c * plane;
    T acc = 0;
    for (int k = 0; k < 8; ++k) acc += T(s.weight[k]) * ch[s.index[k]];
    out[c] = acc;
  }
}

template <class T>
void scatter_into(LatentVoxelGrid<T>& grad, const Vector3d& p, const T* g_row) {
  const Stencil3 s = stencil(grad, p);
  const std::size_t plane = grad.voxels();
  for (int c = 0; c < grad.c; ++c) {
    T* ch = grad.data.data() + c * plane;
    for (int k = 0; k < 8; ++k) ch[s.index[k]] += T(s.weight[k]) * g_row[c];
  }
}

}  // namespace

template <class T>
FeatureRows<T> trilinear_sample(const LatentVoxelGrid<T>& grid, std::span<const Vector3d> points) {
  FeatureRows<T> out(points.size(), grid.c);
  for (std::size_t i = 0; i < points.size(); ++i) sample_into(grid, points[i], out.row(i).data());
  return out;
}

template <class T>
void trilinear_backward(std::span<const Vector3d> points, const FeatureRows<T>& grad_out,
                        LatentVoxelGrid<T>& grad_grid) {
  for (std::size_t i = 0; i < points.size(); ++i) scatter_into(grad_grid, points[i], grad_out.row(i).data());
}

template <class T>
FeatureRows<T> geometry_features(const LatentVoxelGrid<T>& grid, std::span<const Vector3d> points,
                                 const OffsetSet& offsets) {
  const auto omega = offsets.offsets();
  FeatureRows<T> out(points.size(), omega.size() * grid.c);
  for (std::size_t i = 0; i < points.size(); ++i) {
    T* row = out.row(i).data();
    for (std::size_t k = 0; k < omega.size(); ++k) sample_into(grid, points[i] + omega[k], row + k * grid.c);
  }
  return out;
}

template <class T>
void geometry_backward(std::span<const Vector3d> points, const OffsetSet& offsets,
                       const FeatureRows<T>& grad_out, LatentVoxelGrid<T>& grad_grid) {
  const auto omega = offsets.offsets();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const T* row = grad_out.row(i).data();
    for (std::size_t k = 0; k < omega.size(); ++k) {
      scatter_into(grad_grid, points[i] + omega[k], row + k * grad_grid.c);
    }
  }
}

template <class T>
FeatureRows<T> bilinear_sample(const LatentPixelGrid<T>& grid, std::span<const Vector2d> pixels) {
  const auto& f = grid.features;
  FeatureRows<T> out(pixels.size(), f.c);
  const std::size_t plane = f.voxels();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Stencil2 s = stencil(f, grid.stride, pixels[i]);
    for (int c = 0; c < f.c; ++c) {
      const T* ch = f.data.data() + c * plane;
      T acc = 0;
      for (int k = 0; k < 4; ++k) acc += T(s.weight[k]) * ch[s.index[k]];
      out(i, c) = acc;
    }
  }
  return out;
}

template <class T>
void bilinear_backward(std::span<const Vector2d> pixels, int stride, const FeatureRows<T>& grad_out,
                       nn::Tensor<T>& grad_features) {
  const std::size_t plane = grad_features.voxels();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Stencil2 s = stencil(grad_features, stride, pixels[i]);
    for (int c = 0; c < grad_features.c; ++c) {
      T* ch = grad_features.data.data() + c * plane;
      for (int k = 0; k < 4; ++k) ch[s.index[k]] += T(s.weight[k]) * grad_out(i, c);
    }
  }
}

namespace {

std::vector<Vector2d> project_all(const WeakPerspectiveCamera& camera, std::span<const Vector3d> points) {
  std::vector<Vector2d> px(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) px[i] = project(camera, points[i]).pixel;
  return px;
}

}  // namespace

template <class T>
FeatureRows<T> build_encoding(const LatentVoxelGrid<T>& voxels, const LatentPixelGrid<T>& pixels,
                              const WeakPerspectiveCamera& camera, std::span<const Vector3d> points,
                              const OffsetSet& offsets) {
  const FeatureRows<T> geo = geometry_features(voxels, points, offsets);
  const auto px = project_all(camera, points);
  const FeatureRows<T> pix = bilinear_sample(pixels, px);
  FeatureRows<T> out(points.size(), geo.cols() + pix.cols() + 1);
  out.leftCols(geo.cols()) = geo;
  out.middleCols(geo.cols(), pix.cols()) = pix;
  for (std::size_t i = 0; i < points.size(); ++i) out(i, out.cols() - 1) = T(project(camera, points[i]).depth);
  return out;
}

template <class T>
void build_encoding_backward(const WeakPerspectiveCamera& camera, std::span<const Vector3d> points,
                             const OffsetSet& offsets, const EncodingLayout& layout,
                             const FeatureRows<T>& grad_encoding, LatentVoxelGrid<T>* grad_voxels,
                             LatentPixelGrid<T>* grad_pixels) {
  if (grad_encoding.cols() != layout.total()) {
    throw Error(ErrorKind::shape_mismatch, "encoding gradient width " + std::to_string(grad_encoding.cols()) +
                                               " does not match layout " + layout.descriptor());
  }
  if (grad_voxels) {
    geometry_backward<T>(points, offsets, grad_encoding.leftCols(layout.geometry_width()), *grad_voxels);
  }
  if (grad_pixels) {
    const auto px = project_all(camera, points);
    bilinear_backward<T>(px, grad_pixels->stride,
                         grad_encoding.middleCols(layout.pixel_begin(), layout.pixel_channels),
                         grad_pixels->features);
  }
}

#define VOXPIX_SAMPLER_INSTANTIATE(T)                                                                  \
  template FeatureRows<T> trilinear_sample<T>(const LatentVoxelGrid<T>&, std::span<const Vector3d>);   \
  template void trilinear_backward<T>(std::span<const Vector3d>, const FeatureRows<T>&,                \
                                      LatentVoxelGrid<T>&);                                            \
  template FeatureRows<T> geometry_features<T>(const LatentVoxelGrid<T>&, std::span<const Vector3d>,   \
                                               const OffsetSet&);                                      \
  template void geometry_backward<T>(std::span<const Vector3d>, const OffsetSet&,                      \
                                     const FeatureRows<T>&, LatentVoxelGrid<T>&);                      \
  template FeatureRows<T> bilinear_sample<T>(const LatentPixelGrid<T>&, std::span<const Vector2d>);    \
  template void bilinear_backward<T>(std::span<const Vector2d>, int, const FeatureRows<T>&,            \
                                     nn::Tensor<T>&);                                                  \
  template FeatureRows<T> build_encoding<T>(const LatentVoxelGrid<T>&, const LatentPixelGrid<T>&,      \
                                            const WeakPerspectiveCamera&, std::span<const Vector3d>,   \
                                            const OffsetSet&);                                         \
  template void build_encoding_backward<T>(const WeakPerspectiveCamera&, std::span<const Vector3d>,    \
                                           const OffsetSet&, const EncodingLayout&,                    \
                                           const FeatureRows<T>&, LatentVoxelGrid<T>*,                 \
                                           LatentPixelGrid<T>*);

VOXPIX_SAMPLER_INSTANTIATE(float)
VOXPIX_SAMPLER_INSTANTIATE(double)

}  // namespace voxpix
