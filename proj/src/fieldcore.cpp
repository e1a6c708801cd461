#include "voxpix/fieldcore.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace voxpix {

Vector3d TriMesh::face_normal(Eigen::Index f) const {
  const Vector3d a = vertex(faces(f, 0));
  const Vector3d b = vertex(faces(f, 1));
  const Vector3d c = vertex(faces(f, 2));
  const Vector3d n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0.0 ? Vector3d(n / len) : Vector3d::Zero();
}

double TriMesh::face_area(Eigen::Index f) const {
  const Vector3d a = vertex(faces(f, 0));
  return 0.5 * (vertex(faces(f, 1)) - a).cross(vertex(faces(f, 2)) - a).norm();
}

BoundingBox bounding_box(const TriMesh& mesh) {
  BoundingBox box;
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) box.extend(mesh.vertex(i));
  return box;
}

void compute_vertex_normals(TriMesh& mesh) {
  mesh.normals = MatrixX3d::Zero(mesh.num_vertices(), 3);
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    const Vector3d a = mesh.vertex(mesh.faces(f, 0));
    const Vector3d b = mesh.vertex(mesh.faces(f, 1));
    const Vector3d c = mesh.vertex(mesh.faces(f, 2));
    const Vector3d weighted = (b - a).cross(c - a);  // 2 * area * unit normal
    for (int k = 0; k < 3; ++k) mesh.normals.row(mesh.faces(f, k)) += weighted.transpose();
  }
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
    const double len = mesh.normals.row(i).norm();
    if (len > 0.0) {
      mesh.normals.row(i) /= len;
    } else {
      mesh.normals.row(i) = Eigen::RowVector3d(0.0, 0.0, 1.0);
    }
  }
}

namespace {

std::map<std::pair<int, int>, int> undirected_edge_counts(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> counts;
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = mesh.faces(f, k);
      int b = mesh.faces(f, (k + 1) % 3);
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  }
  return counts;
}

}  // namespace

std::optional<std::pair<int, int>> find_open_edge(const TriMesh& mesh) {
  for (const auto& [edge, count] : undirected_edge_counts(mesh)) {
    if (count != 2) return edge;
  }
  return std::nullopt;
}

bool is_watertight(const TriMesh& mesh) {
  return mesh.num_faces() > 0 && !find_open_edge(mesh).has_value();
}

void require_watertight(const TriMesh& mesh, std::string_view context) {
  if (mesh.num_faces() == 0) {
    throw Error(ErrorKind::non_watertight, std::string(context) + ": mesh has no faces");
  }
  if (auto edge = find_open_edge(mesh)) {
    std::ostringstream msg;
    msg << context << ": mesh is not watertight, edge (" << edge->first << ", "
        << edge->second << ") is not shared by exactly two faces";
    throw Error(ErrorKind::non_watertight, msg.str());
  }
}

long euler_characteristic(const TriMesh& mesh) {
  std::set<int> used;
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    for (int k = 0; k < 3; ++k) used.insert(mesh.faces(f, k));
  }
  const long edges = static_cast<long>(undirected_edge_counts(mesh).size());
  return static_cast<long>(used.size()) - edges + static_cast<long>(mesh.num_faces());
}

std::string TransformRecord::to_line() const {
  std::ostringstream out;
  out.precision(17);
  out << scale << ' ' << translation.x() << ' ' << translation.y() << ' ' << translation.z();
  return out.str();
}

TransformRecord TransformRecord::from_line(const std::string& line) {
  std::istringstream in(line);
  TransformRecord rec;
  if (!(in >> rec.scale >> rec.translation.x() >> rec.translation.y() >> rec.translation.z())) {
    throw Error(ErrorKind::io, "malformed transform record: '" + line + "'");
  }
  return rec;
}

Normalized normalize_mesh(const TriMesh& raw, double padding) {
  if (raw.num_faces() == 0 || raw.num_vertices() == 0) {
    throw Error(ErrorKind::invalid_argument, "normalize_mesh: empty mesh");
  }
  if (!(padding >= 0.0 && padding < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "normalize_mesh: padding must lie in [0,1)");
  }
  require_watertight(raw, "normalize_mesh");

  const BoundingBox box = bounding_box(raw);
  const double half_extent = 0.5 * box.extent().maxCoeff();
  if (!(half_extent > 0.0)) {
    throw Error(ErrorKind::degenerate, "normalize_mesh: mesh has zero extent");
  }
  TransformRecord transform;
  transform.scale = (1.0 - padding) / half_extent;
  transform.translation = -transform.scale * box.center();

  Normalized out;
  out.transform = transform;
  out.mesh.faces = raw.faces;
  out.mesh.vertices.resize(raw.num_vertices(), 3);
  for (Eigen::Index i = 0; i < raw.num_vertices(); ++i) {
    out.mesh.vertices.row(i) = transform.apply(raw.vertex(i)).transpose();
  }
  compute_vertex_normals(out.mesh);
  return out;
}

WeakPerspectiveCamera::WeakPerspectiveCamera(double scale, Vector2d principal_point, int width,
                                             int height)
    : scale_(scale), pp_(principal_point), width_(width), height_(height) {
  if (!(scale > 0.0)) throw Error(ErrorKind::invalid_argument, "camera scale must be positive");
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::invalid_argument, "camera image size must be at least 1x1");
  }
}

WeakPerspectiveCamera WeakPerspectiveCamera::standard() {
  return WeakPerspectiveCamera(64.0, Vector2d(64.0, 96.0), 128, 192);
}

std::string WeakPerspectiveCamera::to_line() const {
  std::ostringstream out;
  out.precision(17);
  out << scale_ << ' ' << pp_.x() << ' ' << pp_.y() << ' ' << width_ << ' ' << height_;
  return out.str();
}

WeakPerspectiveCamera WeakPerspectiveCamera::from_line(const std::string& line) {
  std::istringstream in(line);
  double s, px, py;
  int w, h;
  if (!(in >> s >> px >> py >> w >> h)) {
    throw Error(ErrorKind::io, "malformed camera record: '" + line + "'");
  }
  return WeakPerspectiveCamera(s, Vector2d(px, py), w, h);
}

std::string obj_string(const TriMesh& mesh) {
  std::ostringstream out;
  out.precision(9);
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' '
        << mesh.vertices(i, 2) << '\n';
  }
  const bool with_normals = mesh.normals.rows() == mesh.vertices.rows() && mesh.normals.rows() > 0;
  if (with_normals) {
    for (Eigen::Index i = 0; i < mesh.normals.rows(); ++i) {
      out << "vn " << mesh.normals(i, 0) << ' ' << mesh.normals(i, 1) << ' '
          << mesh.normals(i, 2) << '\n';
    }
  }
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      const int idx = mesh.faces(f, k) + 1;
      out << ' ' << idx;
      if (with_normals) out << "//" << idx;
    }
    out << '\n';
  }
  return out.str();
}

void write_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open for writing: " + path.string());
  out << obj_string(mesh);
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open: " + path.string());
  std::vector<Vector3d> verts, norms;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vector3d v;
      ls >> v.x() >> v.y() >> v.z();
      verts.push_back(v);
    } else if (tag == "vn") {
      Vector3d n;
      ls >> n.x() >> n.y() >> n.z();
      norms.push_back(n);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        int value = 0;
        std::from_chars(tok.data(), tok.data() + tok.size(), value);
        idx.push_back(value < 0 ? static_cast<int>(verts.size()) + value : value - 1);
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        faces.emplace_back(idx[0], idx[k], idx[k + 1]);
      }
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      if (faces[i][k] < 0 || faces[i][k] >= static_cast<int>(verts.size())) {
        throw Error(ErrorKind::io, "face index out of range in " + path.string());
      }
    }
    mesh.faces.row(i) = faces[i].transpose();
  }
  if (norms.size() == verts.size() && !norms.empty()) {
    mesh.normals.resize(static_cast<Eigen::Index>(norms.size()), 3);
    for (std::size_t i = 0; i < norms.size(); ++i) mesh.normals.row(i) = norms[i].transpose();
  } else {
    compute_vertex_normals(mesh);
  }
  return mesh;
}

}  // namespace voxpix
