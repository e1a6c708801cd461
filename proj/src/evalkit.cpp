#include "voxpix/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace voxpix {

Vector3d closest_point_on_triangle(const Vector3d& p, const Vector3d& a, const Vector3d& b,
                                   const Vector3d& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + d1 / (d1 - d3) * ab;

  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + d2 / (d2 - d6) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

namespace {

constexpr int kLeafSize = 4;

double box_distance_sq(const Vector3d& p, const Vector3d& lo, const Vector3d& hi) {
  const Vector3d d = (lo - p).cwiseMax(Vector3d::Zero()).cwiseMax(p - hi);
  return d.squaredNorm();
}

}  // namespace

TriangleBvh::TriangleBvh(const TriMesh& mesh) : mesh_(mesh) {
  if (mesh.empty()) throw Error(ErrorKind::invalid_argument, "TriangleBvh: empty mesh");
  const int n = static_cast<int>(mesh.num_faces());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  centroids_.resize(n);
  for (int f = 0; f < n; ++f) {
    centroids_[f] = (mesh.vertex(mesh.faces(f, 0)) + mesh.vertex(mesh.faces(f, 1)) +
                     mesh.vertex(mesh.faces(f, 2))) / 3.0;
  }
  nodes_.reserve(2 * n / kLeafSize + 2);
  build(0, n);
}

int TriangleBvh::build(int begin, int end) {
  Node node;
  node.lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    for (int k = 0; k < 3; ++k) {
      const Vector3d v = mesh_.vertex(mesh_.faces(order_[i], k));
      node.lo = node.lo.cwiseMin(v);
      node.hi = node.hi.cwiseMax(v);
    }
  }
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  int axis;
  (node.hi - node.lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return centroids_[a][axis] < centroids_[b][axis]; });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

TriangleBvh::Hit TriangleBvh::closest(const Vector3d& p) const {
  Hit best{std::numeric_limits<double>::infinity(), -1, Vector3d::Zero()};
  double best_sq = std::numeric_limits<double>::infinity();
  std::vector<int> stack{0};
  stack.reserve(64);
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (box_distance_sq(p, node.lo, node.hi) > best_sq) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[i];
        const Vector3d q = closest_point_on_triangle(p, mesh_.vertex(mesh_.faces(f, 0)),
                                                     mesh_.vertex(mesh_.faces(f, 1)),
                                                     mesh_.vertex(mesh_.faces(f, 2)));
        const double d = (q - p).squaredNorm();
        if (d < best_sq) {
          best_sq = d;
          best.face = f;
          best.point = q;
        }
      }
      continue;
    }
    const double dl = box_distance_sq(p, nodes_[node.left].lo, nodes_[node.left].hi);
    const double dr = box_distance_sq(p, nodes_[node.right].lo, nodes_[node.right].hi);
    // Push the farther child first so the nearer one is visited next.
    if (dl < dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

std::vector<double> point_to_surface(std::span<const Vector3d> points, const TriMesh& mesh) {
  if (mesh.empty()) throw Error(ErrorKind::invalid_argument, "point_to_surface: empty mesh");
  const TriangleBvh bvh(mesh);
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = bvh.closest(points[i]).distance;
  return out;
}

namespace {

double mean_distance(std::span<const Vector3d> points, const TriMesh& target) {
  const auto d = point_to_surface(points, target);
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

void require_nonempty(const TriMesh& mesh, const char* what) {
  if (mesh.empty()) throw Error(ErrorKind::invalid_argument, std::string(what) + ": empty mesh");
}

}  // namespace

double chamfer(const TriMesh& a, const TriMesh& b, int n_samples, std::uint64_t seed_a,
               std::uint64_t seed_b) {
  require_nonempty(a, "chamfer");
  require_nonempty(b, "chamfer");
  const auto sa = sample_surface(a, n_samples, seed_a);
  const auto sb = sample_surface(b, n_samples, seed_b);
  return 0.5 * (mean_distance(sa.points, b) + mean_distance(sb.points, a));
}

SurfaceDistances surface_distances(const TriMesh& recon, const TriMesh& gt, int n_samples,
                                   std::uint64_t seed) {
  require_nonempty(recon, "surface_distances");
  require_nonempty(gt, "surface_distances");
  const auto s_recon = sample_surface(recon, n_samples, seed);
  const auto s_gt = sample_surface(gt, n_samples, seed + 1);
  const double gt_to_recon = mean_distance(s_gt.points, recon);
  const double recon_to_gt = mean_distance(s_recon.points, gt);
  return {0.5 * (gt_to_recon + recon_to_gt), gt_to_recon};
}

NormalErrors normal_errors(const TriMesh& recon, const TriMesh& gt,
                           const WeakPerspectiveCamera& camera) {
  const NormalMap r = mesh_normal_map(recon, camera);
  const NormalMap g = mesh_normal_map(gt, camera);
  std::size_t both = 0, either = 0;
  double cosine = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < r.mask.size(); ++i) {
    either += (r.mask[i] || g.mask[i]);
    if (!(r.mask[i] && g.mask[i])) continue;
    ++both;
    cosine += 1.0 - r.normals[i].dot(g.normals[i]);
    l2 += (r.normals[i] - g.normals[i]).norm();
  }
  if (both == 0) {
    throw Error(ErrorKind::invalid_argument, "normal_errors: foreground masks do not intersect");
  }
  return {cosine / double(both), l2 / double(both), double(both) / double(either), both};
}

MetricReport evaluate_meshes(const std::string& record_id, const TriMesh& recon, const TriMesh& gt,
                             const WeakPerspectiveCamera& camera, int n_samples,
                             std::uint64_t seed) {
  MetricReport row;
  row.record_id = record_id;
  row.n_points = static_cast<std::size_t>(n_samples);
  row.resolution_width = camera.width();
  row.resolution_height = camera.height();
  const SurfaceDistances dist = surface_distances(recon, gt, n_samples, seed);
  row.cd_x1e4 = dist.chamfer * 1e4;
  row.psd_x1e4 = dist.psd * 1e4;
  const NormalErrors normals = normal_errors(recon, gt, camera);
  row.normal_cosine = normals.cosine;
  row.normal_l2 = normals.l2;
  row.mask_iou = normals.mask_iou;
  return row;
}

MetricReport mean_report(std::span<const MetricReport> rows) {
  MetricReport mean;
  mean.record_id = "MEAN";
  std::size_t n = 0;
  for (const auto& row : rows) {
    if (row.failed) continue;
    ++n;
    mean.cd_x1e4 += row.cd_x1e4;
    mean.psd_x1e4 += row.psd_x1e4;
    mean.normal_cosine += row.normal_cosine;
    mean.normal_l2 += row.normal_l2;
    mean.mask_iou += row.mask_iou;
    mean.n_points = row.n_points;
    mean.resolution_width = row.resolution_width;
    mean.resolution_height = row.resolution_height;
  }
  if (n == 0) {
    mean.failed = true;
    mean.failure = "no successful records";
    return mean;
  }
  mean.cd_x1e4 /= double(n);
  mean.psd_x1e4 /= double(n);
  mean.normal_cosine /= double(n);
  mean.normal_l2 /= double(n);
  mean.mask_iou /= double(n);
  return mean;
}

std::string report_tsv(std::span<const MetricReport> rows) {
  std::ostringstream out;
  out << "record_id\tcd_x1e4\tpsd_x1e4\tnormal_cosine\tnormal_l2\tmask_iou\n";
  auto emit = [&](const MetricReport& r) {
    out << r.record_id;
    if (r.failed) {
      out << "\tnan\tnan\tnan\tnan\tnan\n";
      return;
    }
    out << std::setprecision(8) << '\t' << r.cd_x1e4 << '\t' << r.psd_x1e4 << '\t'
        << r.normal_cosine << '\t' << r.normal_l2 << '\t' << r.mask_iou << '\n';
  };
  for (const auto& r : rows) emit(r);
  emit(mean_report(rows));
  return out.str();
}

}  // namespace voxpix
