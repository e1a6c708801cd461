#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "voxpix/datagen.hpp"
#include "voxpix/io.hpp"
#include "voxpix/primitives.hpp"

using namespace voxpix;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("voxpix_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Max over points of the distance to the nearest point of `others`.
double set_distance(std::vector<Vector3d> points, std::vector<Vector3d> others) {
  auto by_y = [](const Vector3d& a, const Vector3d& b) { return a.y() < b.y(); };
  std::sort(others.begin(), others.end(), by_y);
  double worst = 0;
  for (const auto& p : points) {
    double best = 1e300;
    auto it = std::lower_bound(others.begin(), others.end(), Vector3d(0, p.y() - 1e-3, 0), by_y);
    for (; it != others.end() && it->y() <= p.y() + 1e-3; ++it) best = std::min(best, (*it - p).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST_CASE("zero pose figure is mirror symmetric") {
  FigureSpec spec;
  const Figure fig = generate_figure(spec);
  REQUIRE(is_watertight(fig.mesh));
  std::vector<Vector3d> verts, mirrored;
  for (Eigen::Index i = 0; i < fig.mesh.num_vertices(); ++i) {
    verts.push_back(fig.mesh.vertex(i));
    mirrored.push_back(Vector3d(-verts.back().x(), verts.back().y(), verts.back().z()));
  }
  CHECK(set_distance(mirrored, verts) < 1e-6);
}

TEST_CASE("figure generation is deterministic") {
  const FigureSpec spec = random_figure_spec(1234);
  CHECK(random_figure_spec(1234) == spec);
  const Figure a = generate_figure(spec);
  const Figure b = generate_figure(spec);
  CHECK(a.mesh.vertices == b.mesh.vertices);
  CHECK(a.mesh.faces == b.mesh.faces);
}

TEST_CASE("raising an arm sideways matches the capsule sweep") {
  FigureSpec rest;
  FigureSpec raised = rest;
  raised.left_arm.abduction = std::numbers::pi / 2;
  const auto& p = rest.proportions;
  // Hand-computed extremes in body space: the horizontal arm reaches past the
  // shoulder by both segment lengths plus the forearm radius; the hanging arm
  // and the legs do not change the height.
  const double shoulder_x = 0.75 * p.torso_half_width;
  const double reach = shoulder_x + p.upper_arm_length + p.lower_arm_length + 0.85 * p.arm_radius;
  const double leg_x = 0.5 * p.torso_half_width + p.leg_radius;
  const double hang_x = shoulder_x + p.arm_radius;
  const double expected_width_change = reach - std::max({hang_x, leg_x, p.torso_half_width});

  const TriMesh rest_mesh = mesh_primitives(figure_primitives(rest));
  const TriMesh raised_mesh = mesh_primitives(figure_primitives(raised));
  const BoundingBox b0 = bounding_box(rest_mesh), b1 = bounding_box(raised_mesh);
  const double tol = kFigureSpacing;
  CHECK(std::abs(b1.max.x() - reach) < tol);
  CHECK(std::abs((b1.max.x() - b0.max.x()) - expected_width_change) < tol);
  CHECK(std::abs(b1.extent().y() - b0.extent().y()) < tol);

  const BoundingBox analytic = analytic_bounds(figure_primitives(raised));
  CHECK((analytic.min - b1.min).cwiseAbs().maxCoeff() < tol);
  CHECK((analytic.max - b1.max).cwiseAbs().maxCoeff() < tol);
}

TEST_CASE("joint limits are enforced by name") {
  FigureSpec spec;
  spec.left_arm.bend = 3.0;
  try {
    generate_figure(spec);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("left_elbow") != std::string::npos);
  }
  spec = FigureSpec{};
  spec.right_leg.abduction = -0.3;
  CHECK_THROWS_WITH_AS(validate_figure_spec(spec), doctest::Contains("right_hip"), Error);
  spec = FigureSpec{};
  spec.proportions.arm_radius = -1;
  CHECK_THROWS_AS(validate_figure_spec(spec), Error);
}

TEST_CASE("random figures are watertight and single-component") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Figure fig = generate_figure(random_figure_spec(s));
    CHECK(is_watertight(fig.mesh));
    CHECK(euler_characteristic(fig.mesh) % 2 == 0);
    for (Eigen::Index i = 0; i < fig.mesh.num_vertices(); ++i) {
      CHECK(fig.mesh.vertices.row(i).cwiseAbs().maxCoeff() <= 0.9 + 1e-9);
    }
  }
}

TEST_CASE("render") {
  const WeakPerspectiveCamera cam(32.0, Vector2d(32, 32), 64, 64);
  SUBCASE("light along the view direction shades a facing quad uniformly") {
    const ImageSample img = render(quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.0), cam, Vector3d(0, 0, 1));
    int covered = 0;
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (!img.mask_at(r, c)) continue;
        ++covered;
        for (int ch = 0; ch < 3; ++ch) CHECK(img.at(ch, r, c) == 1.0f);
      }
    }
    CHECK(covered == 32 * 32);
  }
  SUBCASE("light orthogonal to the normal renders black") {
    const ImageSample img = render(quad_mesh(-0.5, -0.5, 0.5, 0.5, 0.0), cam, Vector3d(1, 0, 0));
    float brightest = 0;
    for (float v : img.pixels) brightest = std::max(brightest, v);
    CHECK(brightest == 0.0f);
  }
  SUBCASE("sphere is brightest at the projected center") {
    const ImageSample img = render(icosphere(0.5, 4), cam, Vector3d(0, 0, 1));
    int best_r = 0, best_c = 0;
    float best = -1;
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (img.at(0, r, c) > best) {
          best = img.at(0, r, c);
          best_r = r;
          best_c = c;
        }
      }
    }
    // Pixel centers sit at +0.5, so the projected center (32,32) lies between four pixels.
    CHECK(std::abs(best_c + 0.5 - 32) <= 1.0);
    CHECK(std::abs(best_r + 0.5 - 32) <= 1.0);
  }
  SUBCASE("albedo count must match faces") {
    CHECK_THROWS_AS(render(icosphere(0.5, 1), cam, Vector3d(0, 0, 1), FaceAlbedo(3)), Error);
  }
}

TEST_CASE("record mask matches the normal map coverage") {
  const DatasetRecord rec = make_record("train/0000", random_figure_spec(5));
  const NormalMap nm = mesh_normal_map(rec.mesh, rec.camera);
  CHECK(nm.mask == rec.image.mask);
  CHECK(image_margin(rec.mesh, rec.camera) >= 0.05 - 1e-9);
  CHECK(rec.coarse_volume.values == voxelize_coarse(rec.mesh).values);
}

TEST_CASE("record seeds are disjoint across splits") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 500; ++i) {
    CHECK(seen.insert(record_seed(3, "train", i)).second);
    CHECK(seen.insert(record_seed(3, "test", i)).second);
  }
  CHECK_THROWS_AS(record_seed(3, "val", 0), Error);
}

TEST_CASE("build_dataset writes a reproducible layout") {
  const auto a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
  build_dataset(a, 1, 1, 11);
  build_dataset(b, 1, 1, 11);
  for (const char* f : kRecordFiles) {
    CHECK(std::filesystem::exists(a / "train" / "0000" / f));
    CHECK(std::filesystem::exists(a / "test" / "0000" / f));
  }
  CHECK(read_text_file(a / "manifest.tsv") == read_text_file(b / "manifest.tsv"));
  const auto entries = read_manifest(a);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].id == "train/0000");
  CHECK(entries[1].split == "test");

  const auto train = load_split(a, "train");
  const auto test = load_split(a, "test");
  REQUIRE(train.size() == 1);
  REQUIRE(test.size() == 1);
  CHECK(!(train[0].spec == test[0].spec));
  // The on-disk record equals the in-memory one.
  const DatasetRecord fresh = make_record("train/0000", train[0].spec);
  CHECK(fresh.image.pixels == train[0].image.pixels);
  CHECK(fresh.image.mask == train[0].image.mask);
  CHECK(fresh.coarse_volume.values == train[0].coarse_volume.values);
  CHECK(train[0].camera == WeakPerspectiveCamera::standard());

  // Tampering is caught by the manifest hashes.
  write_text_file(a / "train" / "0000" / "camera.txt", "64 64 96 128 192\n\n");
  CHECK_THROWS_AS(load_split(a, "train"), Error);
  CHECK_THROWS_AS(build_dataset(a, 0, 1, 1), Error);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("coarse occupied fraction stays within the volume-analysis bound") {
  // Limb radii were chosen so the slimmest sampled figure still covers 2% of
  // the cells; raised arms lengthen the box and are the worst case.
  double lo = 1, hi = 0;
  for (int i = 0; i < 200; ++i) {
    const auto spec = random_figure_spec(record_seed(0, "train", i));
    const double f = voxelize_coarse(generate_figure(spec).mesh).occupied_fraction();
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  MESSAGE("occupied fraction range " << lo << " .. " << hi);
  CHECK(lo >= 0.02);
  CHECK(hi <= 0.25);
}

TEST_CASE("png round trip keeps 8-bit values and mask") {
  ImageSample img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = float(i % 7) / 6.0f;
  img.mask_at(1, 2) = 1;
  quantize_8bit(img);
  const auto dir = scratch_dir("png");
  std::filesystem::create_directories(dir);
  write_png(dir / "x.png", img);
  const ImageSample back = read_png(dir / "x.png");
  CHECK(back.pixels == img.pixels);
  CHECK(back.mask == img.mask);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::filesystem::remove_all(dir);
}
