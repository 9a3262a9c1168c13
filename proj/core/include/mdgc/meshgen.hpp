#pragma once

#include "mdgc/mesh.hpp"

namespace mdgc {

// Procedural meshes for demos and tests.

// Regular triangulated grid in the z=0 plane: nx*ny vertices at the given
// spacing, each cell split along the same diagonal. Vertex (ix, iy) has
// index iy*nx + ix.
TriangleMesh make_grid(int nx, int ny, double spacing = 1.0);

// Unit icosphere: icosahedron subdivided `subdiv` times, vertices projected
// onto the unit sphere. subdiv 0 = icosahedron (12 vertices).
TriangleMesh make_icosphere(int subdiv);

// Icosphere with seeded radial perturbation, |noise| <= amplitude (relative).
TriangleMesh make_noisy_icosphere(int subdiv, double amplitude, uint64_t seed);

// Axis-aligned unit cube, each quad split into two triangles.
TriangleMesh make_cube();

} // namespace mdgc
