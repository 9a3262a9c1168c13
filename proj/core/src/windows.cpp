#include "mdgc/windows.hpp"

#include <cmath>

#include "mdgc/angles.hpp"
#include "mdgc/parallel.hpp"

namespace mdgc {

double WindowSpec::theta(int j) const { return two_pi * j / n_theta; }

void WindowSpec::validate() const {
  if (n_rho < 1 || n_theta < 2 || !(radius > 0))
    throw ConfigInvalid("window spec needs n_rho >= 1, n_theta >= 2, radius > 0");
}

namespace {

struct Patch {
  std::vector<double> x, y;  // planar embedding of reached vertices
  std::vector<int> faces;    // faces with all three corners reached
};

Patch embed_patch(const GpcMap& gpc, const TriangleMesh& mesh) {
  Patch p;
  int nv = mesh.n_vertices();
  p.x.assign(nv, 0);
  p.y.assign(nv, 0);
  for (int v = 0; v < nv; ++v)
    if (gpc.reached(v)) {
      p.x[v] = gpc.r[v] * std::cos(gpc.theta[v]);
      p.y[v] = gpc.r[v] * std::sin(gpc.theta[v]);
    }
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& t = mesh.faces[f];
    if (gpc.reached(t[0]) && gpc.reached(t[1]) && gpc.reached(t[2]))
      p.faces.push_back(f);
  }
  return p;
}

std::optional<LocatedPoint> locate_in_patch(const Patch& patch,
                                            const TriangleMesh& mesh,
                                            double px, double py, double eps) {
  int best_face = -1;
  double best_minb = -std::numeric_limits<double>::max();
  std::array<double, 3> best_w{};
  for (int f : patch.faces) {
    const auto& t = mesh.faces[f];
    double ax = patch.x[t[0]], ay = patch.y[t[0]];
    double bx = patch.x[t[1]], by = patch.y[t[1]];
    double cx = patch.x[t[2]], cy = patch.y[t[2]];
    double denom = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    double area2 = std::abs(denom);
    if (area2 <= 1e-300)
      continue; // folded to a sliver in the chart
    double wa = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / denom;
    double wb = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / denom;
    double wc = 1.0 - wa - wb;
    // epsilon inflation in distance units: w * 2*area / opposite_side >= -eps
    double la = std::hypot(cx - bx, cy - by);
    double lb = std::hypot(ax - cx, ay - cy);
    double lc = std::hypot(bx - ax, by - ay);
    if (la <= 0 || lb <= 0 || lc <= 0)
      continue;
    bool inside = (wa * area2 / la >= -eps) && (wb * area2 / lb >= -eps) &&
                  (wc * area2 / lc >= -eps);
    if (!inside)
      continue;
    double minb = std::min({wa, wb, wc});
    if (minb > best_minb) {
      best_minb = minb;
      best_face = f;
      best_w = {wa, wb, wc};
    }
  }
  if (best_face < 0)
    return std::nullopt;
  // clamp epsilon-negative weights and renormalize
  double sum = 0;
  for (double& w : best_w) {
    w = std::max(w, 0.0);
    sum += w;
  }
  for (double& w : best_w)
    w /= sum;
  return LocatedPoint{best_face, best_w};
}

} // namespace

std::optional<LocatedPoint> locate_in_gpc(const GpcMap& gpc,
                                          const TriangleMesh& mesh, double rho,
                                          double theta, double inflate_radius) {
  if (rho > gpc.r_max)
    throw ConfigInvalid("locate_in_gpc query radius exceeds the patch r_max");
  Patch patch = embed_patch(gpc, mesh);
  double eps = 1e-9 * (inflate_radius > 0 ? inflate_radius : rho);
  return locate_in_patch(patch, mesh, rho * std::cos(theta),
                         rho * std::sin(theta), eps);
}

WindowTensors build_windows(const TriangleMesh& mesh,
                            const std::vector<GpcMap>& gpcs,
                            const WindowSpec& spec) {
  spec.validate();
  int nv = mesh.n_vertices();
  if ((int)gpcs.size() != nv)
    throw ShapeMismatch("build_windows needs one gpc per vertex");
  for (const auto& g : gpcs)
    if (g.r_max < spec.radius)
      throw ConfigInvalid("gpc r_max is smaller than the window radius");

  WindowTensors t;
  t.spec = spec;
  t.nv = nv;
  size_t np = t.n_points();
  t.E.assign(np * 3, 0);
  t.W.assign(np * 3, 0.0);
  t.gamma_floor.assign(np * 3, 0);
  t.gamma_frac.assign(np * 3, 0.0);
  t.valid.assign(np, 0);

  const double eps = 1e-9 * spec.radius;
  std::vector<int> invalid_count(nv, 0);

  parallel_for(nv, [&](int v) {
    const GpcMap& gpc = gpcs[v];
    Patch patch = embed_patch(gpc, mesh);
    for (int i = 0; i < spec.n_rho; ++i) {
      double rho = spec.rho(i);
      for (int j = 0; j < spec.n_theta; ++j) {
        double th = spec.theta(j);
        auto hit = locate_in_patch(patch, mesh, rho * std::cos(th),
                                   rho * std::sin(th), eps);
        size_t pt = t.point_index(v, i, j);
        if (!hit) {
          invalid_count[v]++;
          continue;
        }
        t.valid[pt] = 1;
        const auto& tri = mesh.faces[hit->face];
        for (int m = 0; m < 3; ++m) {
          size_t s = pt * 3 + m;
          int w = tri[m];
          t.E[s] = w;
          t.W[s] = hit->weights[m];
          // normalized transported angle, split into floor bin + fraction
          double g = gpc.gamma[w] / two_pi + (double)j / spec.n_theta;
          g -= std::floor(g);
          double scaled = g * spec.n_theta;
          int fl = (int)scaled;
          if (fl >= spec.n_theta)
            fl = spec.n_theta - 1;
          t.gamma_floor[s] = fl;
          t.gamma_frac[s] = scaled - fl;
        }
      }
    }
  });

  int total = spec.n_rho * spec.n_theta;
  for (int v = 0; v < nv; ++v)
    if (!mesh.is_boundary_vertex(v) && 2 * invalid_count[v] > total)
      throw TooManyInvalid("vertex " + std::to_string(v) + " lost " +
                           std::to_string(invalid_count[v]) + "/" +
                           std::to_string(total) +
                           " window points; radius too large for the mesh");
  return t;
}

WindowTensors rotate_reference(const WindowTensors& tensors, int v, int k_bins) {
  int nth = tensors.spec.n_theta;
  if (v < 0 || v >= tensors.nv)
    throw SourceOutOfRange("rotate_reference vertex out of range");
  if (k_bins < 0 || k_bins >= nth)
    throw ConfigInvalid("rotate_reference needs 0 <= k_bins < n_theta");

  WindowTensors out = tensors;
  // v's own window slices: new slice j reads old slice (j + k)
  for (int i = 0; i < tensors.spec.n_rho; ++i)
    for (int j = 0; j < nth; ++j) {
      int js = (j + k_bins) % nth;
      size_t dst = out.point_index(v, i, j);
      size_t src = tensors.point_index(v, i, js);
      out.valid[dst] = tensors.valid[src];
      for (int m = 0; m < 3; ++m) {
        out.E[dst * 3 + m] = tensors.E[src * 3 + m];
        out.W[dst * 3 + m] = tensors.W[src * 3 + m];
        out.gamma_floor[dst * 3 + m] = tensors.gamma_floor[src * 3 + m];
        out.gamma_frac[dst * 3 + m] = tensors.gamma_frac[src * 3 + m];
      }
    }
  // every appearance of v as a supporting vertex now reads v's relabeled
  // bins: shift the floor by -k
  for (size_t pt = 0; pt < out.n_points(); ++pt) {
    if (!out.valid[pt])
      continue;
    for (int m = 0; m < 3; ++m) {
      size_t s = pt * 3 + m;
      if (out.E[s] == v)
        out.gamma_floor[s] = (out.gamma_floor[s] - k_bins % nth + nth) % nth;
    }
  }
  return out;
}

} // namespace mdgc
