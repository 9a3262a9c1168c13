#include "mdgc/gpc.hpp"

#include <cmath>
#include <queue>

#include "mdgc/angles.hpp"
#include "mdgc/parallel.hpp"

namespace mdgc {

double edge_transport(const TriangleMesh& mesh, const OneRing& ring_i,
                      const OneRing& ring_j, int i, int j) {
  (void)mesh;
  if (ring_i.center != i || ring_j.center != j)
    throw NotAdjacent("edge_transport rings do not match the vertices");
  double theta_ij = ring_i.angle_of(j);
  double theta_ji = ring_j.angle_of(i);
  return wrap_2pi(theta_ji - theta_ij + std::numbers::pi_v<double>);
}

double edge_transport(const TriangleMesh& mesh, int i, int j) {
  return edge_transport(mesh, mesh.ring(i), mesh.ring(j), i, j);
}

namespace {

struct Vec2 {
  double x = 0, y = 0;
  double norm() const { return std::hypot(x, y); }
};
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

double angle_between(Vec2 a, Vec2 b) {
  double na = a.norm(), nb = b.norm();
  if (na <= 0 || nb <= 0)
    return 0;
  return std::acos(std::clamp(dot(a, b) / (na * nb), -1.0, 1.0));
}

} // namespace

GpcEstimate update_triangle(const TriangleMesh& mesh, int i, int j, int k,
                            const GpcEstimate& at_j, const GpcEstimate& at_k) {
  const OneRing& ring = mesh.ring(i);
  int jn = ring.index_of(j), kn = ring.index_of(k);
  if (jn < 0 || kn < 0)
    throw NotAdjacent("update_triangle: supports are not ring neighbors");

  GpcEstimate best; // r = +inf until a candidate lands
  bool fin_j = std::isfinite(at_j.r), fin_k = std::isfinite(at_k.r);
  if (!fin_j && !fin_k)
    return best;

  Vec2 pj{ring.radii[jn] * std::cos(ring.angles[jn]),
          ring.radii[jn] * std::sin(ring.angles[jn])};
  Vec2 pk{ring.radii[kn] * std::cos(ring.angles[kn]),
          ring.radii[kn] * std::sin(ring.angles[kn])};

  uint8_t here = mesh.is_boundary_vertex(i) ? 1 : 0;
  double dji = 0, dki = 0; // edge transports into i's chart
  if (fin_j)
    dji = edge_transport(mesh, j, i);
  if (fin_k)
    dki = edge_transport(mesh, k, i);

  // interior case: unfold the source from both estimates and let the path
  // cross the opposite segment
  if (fin_j && fin_k && at_j.r > 0 && at_k.r > 0) {
    Vec2 jk = pk - pj;
    double d = jk.norm();
    double rj = at_j.r, rk = at_k.r;
    if (d > 0 && d >= std::abs(rj - rk) && d <= rj + rk) {
      double a = (rj * rj - rk * rk + d * d) / (2 * d);
      double h2 = rj * rj - a * a;
      double h = h2 > 0 ? std::sqrt(h2) : 0;
      Vec2 base{pj.x + a / d * jk.x, pj.y + a / d * jk.y};
      Vec2 perp{-jk.y / d, jk.x / d};
      // the unfolded source sits across the jk line from the origin
      double origin_side = cross(jk, Vec2{0, 0} - pj);
      double sign = origin_side > 0 ? -1.0 : 1.0;
      Vec2 s{base.x + sign * h * perp.x, base.y + sign * h * perp.y};

      // does the straight path s -> origin cross the segment [pj, pk]?
      // solve s + t*(-s) = pj + u*jk
      double det = (-s.x) * (-jk.y) - (-s.y) * (-jk.x);
      if (std::abs(det) > 1e-300) {
        Vec2 rhs = pj - s;
        double t = (rhs.x * (-jk.y) - rhs.y * (-jk.x)) / det;
        double u = ((-s.x) * rhs.y - (-s.y) * rhs.x) / det;
        const double tol = 1e-12;
        if (t >= -tol && t <= 1 + tol && u >= -tol && u <= 1 + tol) {
          Vec2 sj = pj - s, sk = pk - s, si = Vec2{0, 0} - s;
          double phi_j = angle_between(sj, si);
          double phi_full = angle_between(sj, sk);
          double alpha =
              phi_full > 0 ? std::clamp(phi_j / phi_full, 0.0, 1.0) : 0.5;
          best.r = s.norm();
          best.theta = mix_angle(alpha, at_j.theta, at_k.theta);
          best.gamma = mix_angle(alpha, wrap_2pi(at_j.gamma + dji),
                                 wrap_2pi(at_k.gamma + dki));
          best.flags = (uint8_t)(at_j.flags | at_k.flags | here);
        }
      }
    }
  }

  // endpoint cases: the shortest admissible path exits through a vertex
  if (fin_j) {
    double cand = at_j.r + ring.radii[jn];
    if (cand < best.r) {
      best.r = cand;
      best.theta = at_j.theta;
      best.gamma = wrap_2pi(at_j.gamma + dji);
      best.flags = (uint8_t)(at_j.flags | here);
    }
  }
  if (fin_k) {
    double cand = at_k.r + ring.radii[kn];
    if (cand < best.r) {
      best.r = cand;
      best.theta = at_k.theta;
      best.gamma = wrap_2pi(at_k.gamma + dki);
      best.flags = (uint8_t)(at_k.flags | here);
    }
  }
  return best;
}

GpcMap compute_gpc(const TriangleMesh& mesh, int source, double r_max,
                   double eps, const OneRing* source_ring) {
  int nv = mesh.n_vertices();
  if (source < 0 || source >= nv)
    throw SourceOutOfRange("gpc source out of range");
  if (!(r_max > 0) || !(eps > 0))
    throw ConfigInvalid("compute_gpc needs r_max > 0 and eps > 0");

  GpcMap map;
  map.source = source;
  map.r_max = r_max;
  map.eps = eps;
  map.r.assign(nv, GpcMap::unreached);
  map.theta.assign(nv, 0.0);
  map.gamma.assign(nv, 0.0);
  map.flags.assign(nv, 0);

  const OneRing& sring = source_ring ? *source_ring : mesh.ring(source);
  map.r[source] = 0;

  // (r, vertex) min-heap; lazy entries are skipped when stale
  using Node = std::pair<double, int>;
  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> heap;

  uint8_t sboundary = sring.is_boundary ? 1 : 0;
  for (size_t m = 0; m < sring.neighbors.size(); ++m) {
    int n = sring.neighbors[m];
    double rn = sring.radii[m];
    if (rn > r_max)
      continue;
    map.r[n] = rn;
    map.theta[n] = sring.angles[m];
    map.gamma[n] = edge_transport(mesh, sring, mesh.ring(n), source, n);
    map.flags[n] =
        (uint8_t)(sboundary | (mesh.is_boundary_vertex(n) ? 1 : 0));
    heap.push({rn, n});
  }

  auto estimate_at = [&](int v) {
    return GpcEstimate{map.r[v], map.theta[v], map.gamma[v], map.flags[v]};
  };

  while (!heap.empty()) {
    auto [rv, v] = heap.top();
    heap.pop();
    if (rv != map.r[v])
      continue; // superseded entry
    if (rv > r_max)
      continue;
    const OneRing& vring = mesh.ring(v);
    for (int i : vring.neighbors) {
      if (i == source)
        continue;
      // full re-update of i over every incident sector of its ring
      const OneRing& iring = mesh.ring(i);
      int n = (int)iring.neighbors.size();
      int sectors = (int)iring.alphas.size();
      GpcEstimate cand;
      for (int m = 0; m < sectors; ++m) {
        int a = iring.neighbors[m];
        int b = iring.neighbors[(m + 1) % n];
        GpcEstimate c = update_triangle(mesh, i, a, b, estimate_at(a),
                                        estimate_at(b));
        if (c.r < cand.r)
          cand = c;
      }
      if (cand.r <= r_max && map.r[i] > (1 + eps) * cand.r) {
        map.r[i] = cand.r;
        map.theta[i] = cand.theta;
        map.gamma[i] = cand.gamma;
        map.flags[i] = cand.flags;
        heap.push({cand.r, i});
      }
    }
  }
  return map;
}

std::vector<GpcMap> compute_all_gpc(const TriangleMesh& mesh, double r_max,
                                    double eps) {
  std::vector<GpcMap> maps(mesh.n_vertices());
  parallel_for(mesh.n_vertices(),
               [&](int s) { maps[s] = compute_gpc(mesh, s, r_max, eps); });
  return maps;
}

} // namespace mdgc
