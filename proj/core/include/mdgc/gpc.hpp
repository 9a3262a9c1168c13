#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mdgc/mesh.hpp"

namespace mdgc {

// Geodesic polar coordinates around one source vertex. For every reached
// vertex v: r = geodesic radius, theta = polar angle of the geodesic's
// starting direction in the source chart, gamma = the angle, in v's own
// chart, of the parallel transport of the source reference direction along
// the (approximate) geodesic. Unreached vertices have r = +inf and
// undefined theta/gamma.
struct GpcMap {
  int source = -1;
  double r_max = 0;
  double eps = 0;
  std::vector<double> r;
  std::vector<double> theta; // [0, 2*pi)
  std::vector<double> gamma; // [0, 2*pi)
  // bit 0: the gamma estimate passed through a boundary vertex whose ring
  // (and hence chart) is truncated; window building may treat it as less
  // trustworthy.
  std::vector<uint8_t> flags;

  bool reached(int v) const { return std::isfinite(r[v]); }
  static constexpr double unreached = std::numeric_limits<double>::infinity();
};

struct GpcEstimate {
  double r = GpcMap::unreached;
  double theta = 0;
  double gamma = 0;
  uint8_t flags = 0;
};

// Transport offset along edge (i -> j): an angle u in i's chart transports
// to (u + delta) mod 2*pi in j's chart. delta = theta_ji - theta_ij + pi,
// where theta_ij is the chart angle of edge (i->j) at i. Transporting
// i -> j -> i composes to the identity.
double edge_transport(const TriangleMesh& mesh, const OneRing& ring_i,
                      const OneRing& ring_j, int i, int j);
double edge_transport(const TriangleMesh& mesh, int i, int j);

// One fast-marching update of vertex i through the face (i, j, k): unfolds
// the source into i's chart from the estimates at j and k and minimizes
// path length through the segment [e_ij, e_ik]. Angle and transport follow
// the three-case rule: endpoint pass-through, otherwise angular
// interpolation along the smaller sector at the unfolded source. Returns an
// estimate with r = +inf when no candidate exists (both supports
// unreached). The caller decides acceptance (the no-improvement signal).
GpcEstimate update_triangle(const TriangleMesh& mesh, int i, int j, int k,
                            const GpcEstimate& at_j, const GpcEstimate& at_k);

// Fast marching with joint transport propagation from `source`, stopping at
// geodesic radius R_max. A vertex estimate is replaced only when improved
// by more than the relative factor (1+eps). `source_ring` overrides the
// source's one-ring (reference-direction relabeling experiments); the
// default uses the mesh ring.
GpcMap compute_gpc(const TriangleMesh& mesh, int source, double r_max,
                   double eps = 1e-12, const OneRing* source_ring = nullptr);

// One map per vertex; sources are independent, so the result is identical
// whether run sequentially or in parallel.
std::vector<GpcMap> compute_all_gpc(const TriangleMesh& mesh, double r_max,
                                    double eps = 1e-12);

} // namespace mdgc
