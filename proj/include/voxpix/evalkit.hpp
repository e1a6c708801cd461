#pragma once

// Reconstruction metrics: Chamfer distance, point-to-surface distance and
// input-view normal errors.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxpix/fieldcore.hpp"
#include "voxpix/geometry.hpp"

namespace voxpix {

// Closest point on triangle abc to p.
Vector3d closest_point_on_triangle(const Vector3d& p, const Vector3d& a, const Vector3d& b,
                                   const Vector3d& c);

// Bounding-volume hierarchy over the triangles of a mesh, answering exact
// nearest-surface queries.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriMesh& mesh);

  struct Hit {
    double distance;
    int face;
    Vector3d point;
  };
  Hit closest(const Vector3d& p) const;

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1, right = -1;  // children, or -1 for leaves
    int begin = 0, end = 0;     // triangle range for leaves
  };
  int build(int begin, int end);

  const TriMesh& mesh_;
  std::vector<int> order_;
  std::vector<Eigen::Vector3d> centroids_;
  std::vector<Node> nodes_;
};

std::vector<double> point_to_surface(std::span<const Vector3d> points, const TriMesh& mesh);

// Symmetric mean of unsquared sampled point-to-surface distances. Samples of
// `a` use seed_a and samples of `b` use seed_b.
double chamfer(const TriMesh& a, const TriMesh& b, int n_samples, std::uint64_t seed_a,
               std::uint64_t seed_b);
inline double chamfer(const TriMesh& a, const TriMesh& b, int n_samples = 10000,
                      std::uint64_t seed = 0) {
  return chamfer(a, b, n_samples, seed, seed + 1);
}

struct SurfaceDistances {
  double chamfer;  // symmetric mean
  double psd;      // ground truth -> reconstruction only
};

// Shares one sample set per mesh between both metrics.
SurfaceDistances surface_distances(const TriMesh& recon, const TriMesh& gt, int n_samples,
                                   std::uint64_t seed);

struct NormalErrors {
  double cosine;    // mean (1 - n_r . n_g)
  double l2;        // mean |n_r - n_g|
  double mask_iou;  // diagnostic
  std::size_t pixels;
};

// Compared over the intersection of both foreground masks.
NormalErrors normal_errors(const TriMesh& recon, const TriMesh& gt,
                           const WeakPerspectiveCamera& camera);

struct MetricReport {
  std::string record_id;
  double cd_x1e4 = 0.0;
  double psd_x1e4 = 0.0;
  double normal_cosine = 0.0;
  double normal_l2 = 0.0;
  double mask_iou = 0.0;
  std::size_t n_points = 0;
  int resolution_width = 0;
  int resolution_height = 0;
  bool failed = false;  // sentinel row: reconstruction or metric failure
  std::string failure;
};

MetricReport evaluate_meshes(const std::string& record_id, const TriMesh& recon, const TriMesh& gt,
                             const WeakPerspectiveCamera& camera, int n_samples, std::uint64_t seed);

// Arithmetic mean over non-failed rows, labelled "MEAN".
MetricReport mean_report(std::span<const MetricReport> rows);

// TSV: record_id, cd_x1e4, psd_x1e4, normal_cosine, normal_l2, mask_iou; final MEAN row.
std::string report_tsv(std::span<const MetricReport> rows);

}  // namespace voxpix
