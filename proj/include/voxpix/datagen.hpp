#pragma once

// Procedural capsule figures: an articulated union of capsules and ellipsoids,
// meshed watertight, shaded, and written out as a train/test dataset.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "voxpix/fieldcore.hpp"
#include "voxpix/geometry.hpp"

namespace voxpix {

// Arms hang straight down and legs point down at zero angles.
//   abduction: raise sideways, away from the torso
//   flexion:   swing forward, toward the camera (+z)
//   bend:      elbow folds forward, knee folds backward
struct LimbPose {
  double abduction = 0.0;
  double flexion = 0.0;
  double bend = 0.0;
  bool operator==(const LimbPose&) const = default;
};

// Body-space lengths; the finished mesh is rescaled into the canonical box.
struct FigureProportions {
  double torso_half_width = 0.26;
  double torso_half_height = 0.34;
  double torso_half_depth = 0.19;
  double head_radius = 0.13;
  double arm_radius = 0.095;
  double upper_arm_length = 0.32;
  double lower_arm_length = 0.30;
  double leg_radius = 0.125;
  double upper_leg_length = 0.42;
  double lower_leg_length = 0.40;
  bool operator==(const FigureProportions&) const = default;
};

// "Left" limbs sit on the +x side of the body.
struct FigureSpec {
  std::uint64_t seed = 0;
  LimbPose left_arm, right_arm, left_leg, right_leg;
  double torso_lean = 0.0;  // forward lean about the pelvis
  FigureProportions proportions;
  double camera_yaw = 0.0;
  double camera_pitch = 0.0;
  bool operator==(const FigureSpec&) const = default;
};

// Throws invalid_argument naming the first joint or proportion out of range.
void validate_figure_spec(const FigureSpec& spec);

// Samples pose, proportions and view from the seed.
FigureSpec random_figure_spec(std::uint64_t seed);

std::string figure_spec_json(const FigureSpec& spec);
FigureSpec figure_spec_from_json(const std::string& text);

enum class BodyPart : int { head = 0, torso = 1, arms = 2, legs = 3 };
constexpr int kNumBodyParts = 4;

struct FigurePrimitive {
  enum class Shape { capsule, ellipsoid } shape = Shape::capsule;
  BodyPart part = BodyPart::torso;
  std::string joint;       // joint that attaches this primitive to its parent
  int parent = -1;
  Vector3d a = Vector3d::Zero(), b = Vector3d::Zero();  // capsule axis
  double radius = 0.0;
  Vector3d center = Vector3d::Zero();                   // ellipsoid
  Vector3d radii = Vector3d::Ones();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

  double sdf(const Vector3d& p) const;  // exact for capsules, a bound for ellipsoids
  BoundingBox bounds() const;
};

// Body-space primitives with the camera yaw/pitch already applied.
std::vector<FigurePrimitive> figure_primitives(const FigureSpec& spec);
// Union of the primitives' exact bounding boxes.
BoundingBox analytic_bounds(const std::vector<FigurePrimitive>& parts);

struct Figure {
  CanonicalMesh mesh;
  TransformRecord transform;    // body space -> canonical
  std::vector<BodyPart> face_part;
};

constexpr double kFigureSpacing = 0.02;
constexpr double kFigurePadding = 0.1;

// Marching-cubes mesh of the primitive union in body space.
TriMesh mesh_primitives(const std::vector<FigurePrimitive>& parts, double spacing = kFigureSpacing);

Figure generate_figure(const FigureSpec& spec, double spacing = kFigureSpacing);

// Per-face RGB albedo. Unit albedo everywhere when none is supplied.
using FaceAlbedo = std::vector<Eigen::Vector3f>;

// Lambertian max(0, n.l) shading with interpolated vertex normals.
ImageSample render(const TriMesh& mesh, const WeakPerspectiveCamera& camera,
                   const Vector3d& light_dir, const FaceAlbedo& albedo = {});

std::array<Eigen::Vector3f, kNumBodyParts> part_colors(std::uint64_t seed);
Vector3d figure_light(std::uint64_t seed);

// Rounds every channel to the nearest 8-bit level, matching what PNG storage keeps.
void quantize_8bit(ImageSample& image);

struct DatasetRecord {
  std::string id;  // "train/0000"
  ImageSample image;
  CanonicalMesh mesh;
  CoarseOccupancyVolume coarse_volume;
  WeakPerspectiveCamera camera = WeakPerspectiveCamera::standard();
  FigureSpec spec;
};

// Builds and validates one record: coarse volume equals voxelize_coarse(mesh)
// and the mesh projects inside the image with at least a 5% margin.
DatasetRecord make_record(const std::string& id, const FigureSpec& spec);
void verify_record(const DatasetRecord& record);

// Fraction of the image width/height left free on the tightest side.
double image_margin(const TriMesh& mesh, const WeakPerspectiveCamera& camera);

std::uint64_t record_seed(std::uint64_t root_seed, const std::string& split, int index);

// Writes root/{train,test}/NNNN/... and root/manifest.tsv.
void build_dataset(const std::filesystem::path& root, int n_train, int n_test,
                   std::uint64_t root_seed);

void write_record(const std::filesystem::path& dir, const DatasetRecord& record);
DatasetRecord read_record(const std::filesystem::path& dir, const std::string& id);

struct ManifestEntry {
  std::string id;
  std::string split;
  std::array<std::string, 5> sha256;  // in kRecordFiles order
};
inline constexpr std::array<const char*, 5> kRecordFiles = {"image.png", "mesh.obj", "coarse.vol",
                                                              "camera.txt", "spec.json"};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);
// Loads every record of a split listed in the manifest, checking hashes.
std::vector<DatasetRecord> load_split(const std::filesystem::path& root, const std::string& split);

}  // namespace voxpix
