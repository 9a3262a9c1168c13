#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mdgc/gpc.hpp"
#include "mdgc/mesh.hpp"

namespace mdgc {

// Polar sampling pattern shared by all windows: radii rho_i = (i+1)*R/(N_rho+1)
// for i in [0, N_rho), angles theta_j = 2*pi*j/N_theta.
struct WindowSpec {
  int n_rho = 0;
  int n_theta = 0;
  double radius = 0;

  double rho(int i) const { return (i + 1) * radius / (n_rho + 1); }
  double theta(int j) const;
  void validate() const; // n_rho >= 1, n_theta >= 2, radius > 0
};

// Discretized completed exponential map. For every vertex v and window
// point (rho_i, theta_j): the three supporting vertex indices E, their
// barycentric weights W (summing to 1, or identically 0 when the point is
// invalid), and per supporting vertex the transported-angle interpolation
// data: the normalized angle Gamma = gamma_{v,w}/(2*pi) + j/N_theta split
// into a floor bin and a fractional part. Invalid points (outside the
// chart image) contribute nothing anywhere — zero-padding semantics.
struct WindowTensors {
  WindowSpec spec;
  int nv = 0;
  std::vector<int32_t> E;           // [v][i][j][m], m in {0,1,2}
  std::vector<double> W;            // same shape
  std::vector<int32_t> gamma_floor; // same shape, in [0, N_theta)
  std::vector<double> gamma_frac;   // same shape, in [0, 1)
  std::vector<uint8_t> valid;       // [v][i][j]

  size_t point_index(int v, int i, int j) const {
    return ((size_t)v * spec.n_rho + i) * spec.n_theta + j;
  }
  size_t support_index(int v, int i, int j, int m) const {
    return point_index(v, i, j) * 3 + m;
  }
  size_t n_points() const { return (size_t)nv * spec.n_rho * spec.n_theta; }
};

struct LocatedPoint {
  int face = -1;
  std::array<double, 3> weights{}; // aligned with the face's corners
};

// Embeds the reached patch of `gpc` in the plane at (r cos theta, r sin
// theta) and finds a face whose image contains the polar query point.
// Candidate faces need all three corners reached; containment uses an
// epsilon-inflated test (eps = 1e-9 * inflate_radius), and among passing
// faces the one with the least-negative minimum barycentric coordinate
// wins. Returns nullopt when the point lies outside the patch image.
std::optional<LocatedPoint> locate_in_gpc(const GpcMap& gpc,
                                          const TriangleMesh& mesh, double rho,
                                          double theta,
                                          double inflate_radius = 0);

// Builds E/W/Gamma for every vertex. Throws TooManyInvalid if more than
// half of an interior vertex's window points are unlocatable (boundary
// vertices legitimately lose the part of the window that leaves the
// surface, so they are exempt). Requires gpc[v].r_max >= spec.radius.
WindowTensors build_windows(const TriangleMesh& mesh,
                            const std::vector<GpcMap>& gpcs,
                            const WindowSpec& spec);

// Tensors as if v's reference direction were rotated by 2*pi*k/N_theta:
// v's window slices circularly permuted in the angular index, and the
// transported-angle bins shifted by -k wherever v appears as a supporting
// vertex. Pure relabeling: composing rotations k and N_theta-k is the
// identity.
WindowTensors rotate_reference(const WindowTensors& tensors, int v, int k_bins);

} // namespace mdgc
