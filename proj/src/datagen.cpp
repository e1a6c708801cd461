#include "voxpix/datagen.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "voxpix/io.hpp"

namespace voxpix {

namespace {

using Eigen::Matrix3d;

Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitX()).toRotationMatrix(); }
Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitY()).toRotationMatrix(); }
Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitZ()).toRotationMatrix(); }

void check_range(const std::string& name, double value, double lo, double hi) {
  if (!(value >= lo && value <= hi)) {
    std::ostringstream msg;
    msg << "figure spec: " << name << " = " << value << " outside [" << lo << ", " << hi << "]";
    throw Error(ErrorKind::invalid_argument, msg.str());
  }
}

struct LimbLimits {
  double abduction_lo, abduction_hi, flexion_lo, flexion_hi, bend_hi;
};
constexpr LimbLimits kArmLimits{-0.2, 2.8, -1.2, 2.8, 2.4};
constexpr LimbLimits kLegLimits{0.0, 0.8, -0.8, 1.8, 2.4};

void check_limb(const std::string& side, const char* root, const char* mid, const LimbPose& pose,
                const LimbLimits& lim) {
  check_range(side + "_" + root + ".abduction", pose.abduction, lim.abduction_lo, lim.abduction_hi);
  check_range(side + "_" + root + ".flexion", pose.flexion, lim.flexion_lo, lim.flexion_hi);
  check_range(side + "_" + mid + ".bend", pose.bend, 0.0, lim.bend_hi);
}

// Downward unit vector swung forward by `flexion`, then raised sideways.
Vector3d limb_direction(double side, double abduction, double flexion) {
  return rot_z(side * abduction) * rot_x(-flexion) * Vector3d(0, -1, 0);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

void validate_figure_spec(const FigureSpec& spec) {
  check_limb("left", "shoulder", "elbow", spec.left_arm, kArmLimits);
  check_limb("right", "shoulder", "elbow", spec.right_arm, kArmLimits);
  check_limb("left", "hip", "knee", spec.left_leg, kLegLimits);
  check_limb("right", "hip", "knee", spec.right_leg, kLegLimits);
  check_range("spine.lean", spec.torso_lean, -0.5, 0.5);
  check_range("camera_yaw", spec.camera_yaw, -std::numbers::pi, std::numbers::pi);
  check_range("camera_pitch", spec.camera_pitch, -0.6, 0.6);
  const auto& p = spec.proportions;
  check_range("torso_half_width", p.torso_half_width, 0.15, 0.35);
  check_range("torso_half_height", p.torso_half_height, 0.22, 0.45);
  check_range("torso_half_depth", p.torso_half_depth, 0.10, 0.25);
  check_range("head_radius", p.head_radius, 0.08, 0.20);
  check_range("arm_radius", p.arm_radius, 0.04, 0.12);
  check_range("upper_arm_length", p.upper_arm_length, 0.20, 0.45);
  check_range("lower_arm_length", p.lower_arm_length, 0.20, 0.45);
  check_range("leg_radius", p.leg_radius, 0.06, 0.15);
  check_range("upper_leg_length", p.upper_leg_length, 0.30, 0.55);
  check_range("lower_leg_length", p.lower_leg_length, 0.30, 0.55);
}

FigureSpec random_figure_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  FigureSpec spec;
  spec.seed = seed;
  for (LimbPose* arm : {&spec.left_arm, &spec.right_arm}) {
    arm->abduction = u(0.1, 1.5);
    arm->flexion = u(-0.5, 1.5);
    arm->bend = u(0.0, 1.4);
  }
  for (LimbPose* leg : {&spec.left_leg, &spec.right_leg}) {
    leg->abduction = u(0.02, 0.4);
    leg->flexion = u(-0.35, 0.8);
    leg->bend = u(0.0, 1.0);
  }
  spec.torso_lean = u(-0.25, 0.25);
  auto& p = spec.proportions;
  for (double* v : {&p.torso_half_width, &p.torso_half_height, &p.torso_half_depth, &p.head_radius,
                    &p.arm_radius, &p.upper_arm_length, &p.lower_arm_length, &p.leg_radius,
                    &p.upper_leg_length, &p.lower_leg_length}) {
    *v *= u(0.9, 1.1);
  }
  spec.camera_yaw = u(-std::numbers::pi, std::numbers::pi);
  spec.camera_pitch = u(-0.2, 0.2);
  return spec;
}

namespace {

nlohmann::json limb_json(const LimbPose& p) {
  return {{"abduction", p.abduction}, {"flexion", p.flexion}, {"bend", p.bend}};
}

LimbPose limb_from(const nlohmann::json& j) {
  return {j.at("abduction").get<double>(), j.at("flexion").get<double>(), j.at("bend").get<double>()};
}

}  // namespace

std::string figure_spec_json(const FigureSpec& spec) {
  const auto& p = spec.proportions;
  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["left_arm"] = limb_json(spec.left_arm);
  j["right_arm"] = limb_json(spec.right_arm);
  j["left_leg"] = limb_json(spec.left_leg);
  j["right_leg"] = limb_json(spec.right_leg);
  j["torso_lean"] = spec.torso_lean;
  j["proportions"] = {{"torso_half_width", p.torso_half_width},
                      {"torso_half_height", p.torso_half_height},
                      {"torso_half_depth", p.torso_half_depth},
                      {"head_radius", p.head_radius},
                      {"arm_radius", p.arm_radius},
                      {"upper_arm_length", p.upper_arm_length},
                      {"lower_arm_length", p.lower_arm_length},
                      {"leg_radius", p.leg_radius},
                      {"upper_leg_length", p.upper_leg_length},
                      {"lower_leg_length", p.lower_leg_length}};
  j["camera_yaw"] = spec.camera_yaw;
  j["camera_pitch"] = spec.camera_pitch;
  return j.dump(2) + "\n";
}

FigureSpec figure_spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FigureSpec spec;
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.left_arm = limb_from(j.at("left_arm"));
    spec.right_arm = limb_from(j.at("right_arm"));
    spec.left_leg = limb_from(j.at("left_leg"));
    spec.right_leg = limb_from(j.at("right_leg"));
    spec.torso_lean = j.at("torso_lean").get<double>();
    const auto& pj = j.at("proportions");
    auto& p = spec.proportions;
    p.torso_half_width = pj.at("torso_half_width").get<double>();
    p.torso_half_height = pj.at("torso_half_height").get<double>();
    p.torso_half_depth = pj.at("torso_half_depth").get<double>();
    p.head_radius = pj.at("head_radius").get<double>();
    p.arm_radius = pj.at("arm_radius").get<double>();
    p.upper_arm_length = pj.at("upper_arm_length").get<double>();
    p.lower_arm_length = pj.at("lower_arm_length").get<double>();
    p.leg_radius = pj.at("leg_radius").get<double>();
    p.upper_leg_length = pj.at("upper_leg_length").get<double>();
    p.lower_leg_length = pj.at("lower_leg_length").get<double>();
    spec.camera_yaw = j.at("camera_yaw").get<double>();
    spec.camera_pitch = j.at("camera_pitch").get<double>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::io, std::string("figure spec json: ") + e.what());
  }
}

double FigurePrimitive::sdf(const Vector3d& p) const {
  if (shape == Shape::capsule) {
    const Vector3d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm() - radius;
  }
  // Ellipsoid bound k0 (k0 - 1) / k1: exact zero set and sign.
  const Vector3d q = rotation.transpose() * (p - center);
  const double k0 = q.cwiseQuotient(radii).norm();
  const double k1 = q.cwiseQuotient(radii.cwiseProduct(radii)).norm();
  if (k1 == 0.0) return -radii.minCoeff();
  return k0 * (k0 - 1.0) / k1;
}

BoundingBox FigurePrimitive::bounds() const {
  BoundingBox box;
  if (shape == Shape::capsule) {
    box.extend(a.cwiseMin(b) - Vector3d::Constant(radius));
    box.extend(a.cwiseMax(b) + Vector3d::Constant(radius));
    return box;
  }
  Vector3d half;
  for (int i = 0; i < 3; ++i) half[i] = rotation.row(i).transpose().cwiseProduct(radii).norm();
  box.extend(center - half);
  box.extend(center + half);
  return box;
}

std::vector<FigurePrimitive> figure_primitives(const FigureSpec& spec) {
  validate_figure_spec(spec);
  const auto& p = spec.proportions;
  const Matrix3d view = rot_y(spec.camera_yaw) * rot_x(spec.camera_pitch);
  const Matrix3d upper = view * rot_x(spec.torso_lean);
  const double w = p.torso_half_width, h = p.torso_half_height;

  std::vector<FigurePrimitive> parts;
  auto capsule = [&](BodyPart part, std::string joint, int parent, const Vector3d& a,
                     const Vector3d& b, double r) {
    FigurePrimitive prim;
    prim.shape = FigurePrimitive::Shape::capsule;
    prim.part = part;
    prim.joint = std::move(joint);
    prim.parent = parent;
    prim.a = a;
    prim.b = b;
    prim.radius = r;
    parts.push_back(prim);
    return static_cast<int>(parts.size()) - 1;
  };

  FigurePrimitive torso;
  torso.shape = FigurePrimitive::Shape::ellipsoid;
  torso.part = BodyPart::torso;
  torso.joint = "spine";
  torso.center = upper * Vector3d(0, h, 0);
  torso.radii = Vector3d(w, h, p.torso_half_depth);
  torso.rotation = upper;
  parts.push_back(torso);
  const int torso_id = 0;

  const Vector3d head_center = upper * Vector3d(0, 2 * h + 0.85 * p.head_radius, 0);
  const int neck = capsule(BodyPart::torso, "neck", torso_id, upper * Vector3d(0, 1.75 * h, 0),
                           head_center, 0.45 * p.head_radius);
  capsule(BodyPart::head, "neck", neck, head_center, head_center, p.head_radius);

  for (const double side : {1.0, -1.0}) {
    const std::string name = side > 0 ? "left" : "right";
    const LimbPose& arm = side > 0 ? spec.left_arm : spec.right_arm;
    const Vector3d shoulder = upper * Vector3d(side * 0.75 * w, 1.6 * h, 0);
    const Vector3d elbow =
        shoulder + upper * (p.upper_arm_length * limb_direction(side, arm.abduction, arm.flexion));
    const Vector3d hand =
        elbow + upper * (p.lower_arm_length *
                         limb_direction(side, arm.abduction, arm.flexion + arm.bend));
    const int ua = capsule(BodyPart::arms, name + "_shoulder", torso_id, shoulder, elbow, p.arm_radius);
    capsule(BodyPart::arms, name + "_elbow", ua, elbow, hand, 0.85 * p.arm_radius);

    const LimbPose& leg = side > 0 ? spec.left_leg : spec.right_leg;
    const Vector3d hip = view * Vector3d(side * 0.5 * w, 0.25 * h, 0);
    const Vector3d knee =
        hip + view * (p.upper_leg_length * limb_direction(side, leg.abduction, leg.flexion));
    const Vector3d foot =
        knee + view * (p.lower_leg_length *
                       limb_direction(side, leg.abduction, leg.flexion - leg.bend));
    const int ul = capsule(BodyPart::legs, name + "_hip", torso_id, hip, knee, p.leg_radius);
    capsule(BodyPart::legs, name + "_knee", ul, knee, foot, 0.85 * p.leg_radius);
  }

  // Every primitive must start inside its parent, or the union falls apart.
  for (const auto& prim : parts) {
    if (prim.parent < 0) continue;
    const Vector3d anchor = prim.shape == FigurePrimitive::Shape::capsule ? prim.a : prim.center;
    if (parts[prim.parent].sdf(anchor) >= 0.0) {
      throw Error(ErrorKind::non_watertight, "figure: joint " + prim.joint + " is detached from its parent");
    }
  }
  return parts;
}

BoundingBox analytic_bounds(const std::vector<FigurePrimitive>& parts) {
  BoundingBox box;
  for (const auto& prim : parts) {
    const BoundingBox b = prim.bounds();
    box.extend(b.min);
    box.extend(b.max);
  }
  return box;
}

namespace {

double union_sdf(const std::vector<FigurePrimitive>& parts, const Vector3d& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : parts) d = std::min(d, prim.sdf(p));
  return d;
}

int nearest_part(const std::vector<FigurePrimitive>& parts, const Vector3d& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double d = parts[i].sdf(p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int count_components(const TriMesh& mesh) {
  std::vector<int> parent(mesh.num_vertices());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
    for (int k = 1; k < 3; ++k) parent[find(mesh.faces(f, k))] = find(mesh.faces(f, 0));
  }
  int count = 0;
  for (int v = 0; v < static_cast<int>(parent.size()); ++v) count += (find(v) == v);
  return count;
}

}  // namespace

TriMesh mesh_primitives(const std::vector<FigurePrimitive>& parts, double spacing) {
  const BoundingBox box = analytic_bounds(parts);
  // Lattice centered on the box so mirror-symmetric figures give mirrored lattices.
  const Vector3d extent = box.extent() + Vector3d::Constant(4 * spacing);
  const int nx = static_cast<int>(std::ceil(extent.x() / spacing)) + 1;
  const int ny = static_cast<int>(std::ceil(extent.y() / spacing)) + 1;
  const int nz = static_cast<int>(std::ceil(extent.z() / spacing)) + 1;
  const Vector3d origin = box.center() - 0.5 * spacing * Vector3d(nx - 1, ny - 1, nz - 1);
  const GridShape dims{nz, ny, nx};
  std::vector<float> values(dims.size());
  for (int d = 0; d < nz; ++d) {
    for (int hh = 0; hh < ny; ++hh) {
      for (int ww = 0; ww < nx; ++ww) {
        const Vector3d p = origin + spacing * Vector3d(ww, hh, d);
        values[dims.index(d, hh, ww)] = static_cast<float>(-union_sdf(parts, p));
      }
    }
  }
  return marching_cubes_lattice(values, dims, origin, Vector3d::Constant(spacing), 0.0);
}

Figure generate_figure(const FigureSpec& spec, double spacing) {
  const auto parts = figure_primitives(spec);
  const TriMesh raw = mesh_primitives(parts, spacing);
  require_watertight(raw, "generated figure");
  const int components = count_components(raw);
  if (components != 1) {
    throw Error(ErrorKind::non_watertight,
                "generated figure has " + std::to_string(components) + " disconnected components");
  }
  Figure figure;
  Normalized n = normalize_mesh(raw, kFigurePadding);
  figure.mesh = std::move(n.mesh);
  figure.transform = n.transform;
  figure.face_part.resize(raw.num_faces());
  for (Eigen::Index f = 0; f < raw.num_faces(); ++f) {
    const Vector3d c = (raw.vertex(raw.faces(f, 0)) + raw.vertex(raw.faces(f, 1)) +
                        raw.vertex(raw.faces(f, 2))) / 3.0;
    figure.face_part[f] = parts[nearest_part(parts, c)].part;
  }
  return figure;
}

ImageSample render(const TriMesh& mesh, const WeakPerspectiveCamera& camera,
                   const Vector3d& light_dir, const FaceAlbedo& albedo) {
  if (!albedo.empty() && albedo.size() != std::size_t(mesh.num_faces())) {
    throw Error(ErrorKind::shape_mismatch, "render: albedo count " + std::to_string(albedo.size()) +
                                               " != face count " + std::to_string(mesh.num_faces()));
  }
  const Vector3d light = light_dir.normalized();
  const Raster raster = rasterize(mesh, camera);
  ImageSample image(camera.width(), camera.height());
  for (int r = 0; r < raster.height; ++r) {
    for (int c = 0; c < raster.width; ++c) {
      const std::size_t i = std::size_t(r) * raster.width + c;
      const int f = raster.face[i];
      if (f < 0) continue;
      image.mask_at(r, c) = 1;
      const Vector3d& bc = raster.barycentric[i];
      Vector3d n = Vector3d::Zero();
      for (int k = 0; k < 3; ++k) n += bc[k] * mesh.normals.row(mesh.faces(f, k)).transpose();
      n = n.norm() > 0 ? n.normalized() : mesh.face_normal(f);
      const float shade = static_cast<float>(std::max(0.0, n.dot(light)));
      for (int ch = 0; ch < 3; ++ch) {
        const float a = albedo.empty() ? 1.0f : albedo[f][ch];
        image.at(ch, r, c) = std::clamp(a * shade, 0.0f, 1.0f);
      }
    }
  }
  return image;
}

std::array<Eigen::Vector3f, kNumBodyParts> part_colors(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xC0105ull));
  std::uniform_real_distribution<float> u(0.25f, 0.95f);
  std::array<Eigen::Vector3f, kNumBodyParts> colors;
  for (auto& c : colors) c = Eigen::Vector3f(u(rng), u(rng), u(rng));
  return colors;
}

Vector3d figure_light(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x11647ull));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Vector3d(-0.4 + 0.8 * u(rng), -0.2 + 0.7 * u(rng), 1.0).normalized();
}

void quantize_8bit(ImageSample& image) {
  for (float& v : image.pixels) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

double image_margin(const TriMesh& mesh, const WeakPerspectiveCamera& camera) {
  double left = std::numeric_limits<double>::infinity(), top = left;
  double right = -left, bottom = -left;
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
    const Vector2d px = project(camera, mesh.vertex(i)).pixel;
    left = std::min(left, px.x());
    right = std::max(right, px.x());
    top = std::min(top, px.y());
    bottom = std::max(bottom, px.y());
  }
  const double w = camera.width(), h = camera.height();
  return std::min({left / w, (w - right) / w, top / h, (h - bottom) / h});
}

namespace {

constexpr double kMinMargin = 0.05;

}  // namespace

void verify_record(const DatasetRecord& record) {
  require_watertight(record.mesh, "record " + record.id);
  const double margin = image_margin(record.mesh, record.camera);
  if (margin < kMinMargin - 1e-9) {
    throw Error(ErrorKind::invalid_argument,
                "record " + record.id + ": image margin " + std::to_string(margin) + " below 5%");
  }
  const CoarseOccupancyVolume expected = voxelize_coarse(record.mesh, record.coarse_volume.shape);
  if (expected.values != record.coarse_volume.values) {
    throw Error(ErrorKind::invalid_argument, "record " + record.id + ": coarse volume does not match the mesh");
  }
}

DatasetRecord make_record(const std::string& id, const FigureSpec& spec) {
  DatasetRecord record;
  record.id = id;
  record.spec = spec;
  Figure figure = generate_figure(spec);
  const auto colors = part_colors(spec.seed);
  FaceAlbedo albedo(figure.face_part.size());
  for (std::size_t f = 0; f < albedo.size(); ++f) albedo[f] = colors[int(figure.face_part[f])];
  record.image = render(figure.mesh, record.camera, figure_light(spec.seed), albedo);
  quantize_8bit(record.image);
  record.mesh = std::move(figure.mesh);
  record.coarse_volume = voxelize_coarse(record.mesh);
  const double margin = image_margin(record.mesh, record.camera);
  if (margin < kMinMargin - 1e-9) {
    throw Error(ErrorKind::invalid_argument,
                "record " + id + ": image margin " + std::to_string(margin) + " below 5%");
  }
  return record;
}

std::uint64_t record_seed(std::uint64_t root_seed, const std::string& split, int index) {
  if (split != "train" && split != "test") {
    throw Error(ErrorKind::invalid_argument, "unknown split: " + split);
  }
  // splitmix64 is a bijection, so distinct (index, split) pairs never collide.
  const std::uint64_t slot = 2 * std::uint64_t(index) + (split == "test" ? 1 : 0);
  return splitmix64(splitmix64(root_seed) + slot);
}

void write_record(const std::filesystem::path& dir, const DatasetRecord& record) {
  std::filesystem::create_directories(dir);
  write_png(dir / "image.png", record.image);
  write_obj(dir / "mesh.obj", record.mesh);
  write_grid_blob(dir / "coarse.vol", record.coarse_volume.shape, record.coarse_volume.values);
  write_text_file(dir / "camera.txt", record.camera.to_line() + "\n");
  write_text_file(dir / "spec.json", figure_spec_json(record.spec));
}

DatasetRecord read_record(const std::filesystem::path& dir, const std::string& id) {
  DatasetRecord record;
  record.id = id;
  record.image = read_png(dir / "image.png");
  record.mesh = read_obj(dir / "mesh.obj");
  auto [shape, values] = read_grid_blob(dir / "coarse.vol");
  record.coarse_volume.shape = shape;
  record.coarse_volume.kind = CoarseOccupancyVolume::Kind::labels;
  record.coarse_volume.values = std::move(values);
  std::string line = read_text_file(dir / "camera.txt");
  if (!line.empty() && line.back() == '\n') line.pop_back();
  record.camera = WeakPerspectiveCamera::from_line(line);
  record.spec = figure_spec_from_json(read_text_file(dir / "spec.json"));
  return record;
}

namespace {

std::string record_dir_name(int index) {
  std::ostringstream s;
  s << std::setw(4) << std::setfill('0') << index;
  return s.str();
}

}  // namespace

void build_dataset(const std::filesystem::path& root, int n_train, int n_test,
                   std::uint64_t root_seed) {
  if (n_train < 1 || n_test < 1) {
    throw Error(ErrorKind::invalid_argument, "build_dataset: counts must be >= 1");
  }
  std::ostringstream manifest;
  manifest << "id\tsplit";
  for (const char* file : kRecordFiles) manifest << '\t' << file;
  manifest << '\n';
  std::filesystem::path current = root;
  try {
    std::filesystem::create_directories(root);
    for (const auto& [split, count] : {std::pair<std::string, int>{"train", n_train}, {"test", n_test}}) {
      for (int i = 0; i < count; ++i) {
        const std::string name = record_dir_name(i);
        const std::string id = split + "/" + name;
        current = root / split / name;
        const DatasetRecord record = make_record(id, random_figure_spec(record_seed(root_seed, split, i)));
        write_record(current, record);
        // Verify what actually landed on disk.
        verify_record(read_record(current, id));
        manifest << id << '\t' << split;
        for (const char* file : kRecordFiles) manifest << '\t' << sha256_file(current / file);
        manifest << '\n';
      }
    }
    current = root / "manifest.tsv";
    write_text_file(current, manifest.str());
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(e.what()) + " (partial output at " + current.string() + ")");
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ErrorKind::io, std::string(e.what()) + " (partial output at " + current.string() + ")");
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root) {
  std::istringstream in(read_text_file(root / "manifest.tsv"));
  std::string line;
  std::getline(in, line);  // header
  std::vector<ManifestEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry entry;
    fields >> entry.id >> entry.split;
    for (auto& h : entry.sha256) fields >> h;
    if (!fields) throw Error(ErrorKind::io, "malformed manifest line: " + line);
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<DatasetRecord> load_split(const std::filesystem::path& root, const std::string& split) {
  std::vector<DatasetRecord> records;
  for (const auto& entry : read_manifest(root)) {
    if (entry.split != split) continue;
    const std::filesystem::path dir = root / entry.id;
    for (std::size_t k = 0; k < kRecordFiles.size(); ++k) {
      if (sha256_file(dir / kRecordFiles[k]) != entry.sha256[k]) {
        throw Error(ErrorKind::io, "hash mismatch: " + (dir / kRecordFiles[k]).string());
      }
    }
    records.push_back(read_record(dir, entry.id));
  }
  if (records.empty()) throw Error(ErrorKind::invalid_argument, "split '" + split + "' has no records");
  return records;
}

}  // namespace voxpix
