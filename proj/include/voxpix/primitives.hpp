#pragma once

// Small analytic meshes used by tests, datagen and the acceptance suite.

#include "voxpix/fieldcore.hpp"

namespace voxpix {

// Subdivided icosahedron projected onto the sphere; level 0 has 20 faces.
TriMesh icosphere(double radius, int subdivisions, const Vector3d& center = Vector3d::Zero());

// Largest distance between the sphere and the flat facets of icosphere().
double icosphere_chord_error(double radius, int subdivisions);

// Closed axis-aligned box, 12 triangles, outward winding.
TriMesh box_mesh(const Vector3d& lo, const Vector3d& hi);

// Open rectangle in the plane z = depth, facing +z (two triangles).
TriMesh quad_mesh(double x0, double y0, double x1, double y1, double depth);

// Concatenates meshes without welding.
TriMesh merge_meshes(const TriMesh& a, const TriMesh& b);

}  // namespace voxpix
