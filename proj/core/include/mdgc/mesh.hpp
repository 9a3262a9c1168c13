#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdgc/error.hpp"

namespace mdgc {

using Vec3 = Eigen::Vector3d;

// Ordered one-ring of a vertex. Neighbors are listed by successive face
// traversal, counter-clockwise with respect to the mesh orientation.
// sector j is the corner between neighbors j and j+1; interior rings have
// n sectors (cyclic), boundary rings n-1. Interior sector angles are
// normalized so they sum to 2*pi (flattening the cone metric); boundary
// rings keep the raw angles. angle[j] is the cumulative chart angle of
// neighbor j; angle[0] = 0 defines the vertex's reference direction.
struct OneRing {
  int center = -1;
  std::vector<int> neighbors;
  std::vector<double> alphas; // normalized sector angles
  std::vector<double> angles; // cumulative chart angle per neighbor
  std::vector<double> radii;  // 3D edge length per neighbor
  bool is_boundary = false;
  double raw_total = 0; // sum of raw corner angles

  // Chart angle of a neighbor vertex; throws NotAdjacent if absent.
  double angle_of(int neighbor) const;
  int index_of(int neighbor) const; // -1 if absent
};

struct EdgeFaces {
  int f0 = -1, f1 = -1; // incident faces (f1 = -1 on boundary)
};

// Indexed triangle mesh with manifold adjacency. Faces are re-wound on
// construction to a globally consistent orientation (list order and vertex
// indexing are preserved). Immutable once built.
struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> faces;

  // derived
  std::vector<std::vector<int>> vertex_faces;       // faces incident per vertex
  std::unordered_map<uint64_t, EdgeFaces> edge_faces; // key = edge_key(a,b)
  std::vector<OneRing> rings;
  std::vector<Vec3> vertex_normals; // area-weighted, unit
  std::vector<double> face_areas;

  int n_vertices() const { return (int)positions.size(); }
  int n_faces() const { return (int)faces.size(); }

  static uint64_t edge_key(int a, int b) {
    uint64_t lo = (uint64_t)std::min(a, b), hi = (uint64_t)std::max(a, b);
    return (hi << 32) | lo;
  }
  const OneRing& ring(int v) const { return rings[v]; }
  bool is_boundary_vertex(int v) const { return rings[v].is_boundary; }

  // Validates invariants, orients faces, builds adjacency/rings/normals.
  static TriangleMesh build(std::vector<Vec3> positions,
                            std::vector<std::array<int, 3>> faces);

  // Content hash over raw vertex/face bytes (FNV-1a 64).
  uint64_t content_hash() const;
};

// Quadric edge-collapse result: the coarse mesh plus, per fine vertex, the
// coarse vertex its collapse chain ends at and the angular offset between
// its reference direction (carried into the coarse tangent plane by the
// minimal rotation aligning the two vertex normals) and the coarse
// vertex's own reference direction, measured in the coarse chart.
struct SimplificationMap {
  TriangleMesh coarse;
  std::vector<int> fine_to_coarse;
  std::vector<double> angle_offset; // in [0, 2*pi)
  // Per coarse vertex, the fine vertex designated to carry its signal:
  // the 3D-nearest member of the preimage.
  std::vector<int> coarse_to_fine;
};

// --- operations -----------------------------------------------------------

enum class MeshFormat { OFF, OBJ };

TriangleMesh load_mesh(const std::string& path, MeshFormat format);
TriangleMesh load_mesh(const std::string& path); // format from extension

void save_off(const TriangleMesh& mesh, const std::string& path);
// ASCII PLY with per-vertex uchar RGB.
void save_ply(const TriangleMesh& mesh, const std::string& path,
              const std::vector<std::array<uint8_t, 3>>& colors);

// Per-vertex area: the sum of areas of adjacent faces.
std::vector<double> vertex_areas(const TriangleMesh& mesh);

// Recomputes the ordered one-ring of v from the face adjacency. The mesh
// builder calls this for every vertex; it is exposed for direct use and
// testing. start_neighbor < 0 picks the canonical start (boundary start on
// boundary vertices, lowest neighbor index otherwise).
OneRing order_one_ring(const TriangleMesh& mesh, int v, int start_neighbor = -1);

// Chart angle (in v's normalized one-ring chart) of an arbitrary 3D
// direction: project into the tangent plane, find the raw sector that
// contains it, rescale by that sector's normalization.
double chart_angle_of_direction(const TriangleMesh& mesh, int v, const Vec3& dir);

// Quadric error-metric edge collapse down to target_vertex_count (+-5%).
SimplificationMap simplify(const TriangleMesh& mesh, int target_vertex_count);

} // namespace mdgc
