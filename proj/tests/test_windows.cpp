#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_utils.hpp"

using namespace mdgc;

namespace {

// distance of x to the nearest multiple of n (angular bin arithmetic)
double bin_dist(double x, int n) {
  double md = std::fmod(std::fmod(x, (double)n) + n, (double)n);
  return std::min(md, n - md);
}

} // namespace

TEST_CASE("window spec sampling pattern and validation") {
  WindowSpec spec{2, 8, 3.0};
  spec.validate();
  CHECK(spec.rho(0) == doctest::Approx(1.0));
  CHECK(spec.rho(1) == doctest::Approx(2.0));
  for (int j = 0; j < 8; ++j)
    CHECK(spec.theta(j) == doctest::Approx(two_pi * j / 8));

  CHECK_THROWS_AS((WindowSpec{0, 8, 1.0}.validate()), ConfigInvalid);
  CHECK_THROWS_AS((WindowSpec{2, 1, 1.0}.validate()), ConfigInvalid);
  CHECK_THROWS_AS((WindowSpec{2, 8, 0.0}.validate()), ConfigInvalid);
}

TEST_CASE("locate_in_gpc on a flat chart") {
  const TriangleMesh m = make_grid(9, 9, 1.0);
  const int s = tu::grid_index(9, 4, 4);
  const GpcMap g = compute_gpc(m, s, 3.0);
  const double phi0 = tu::ref_angle(m, s);

  SUBCASE("a query at a settled vertex returns weight one") {
    const int v = tu::grid_index(9, 5, 5);
    REQUIRE(g.reached(v));
    auto loc = locate_in_gpc(g, m, g.r[v], g.theta[v]);
    REQUIRE(loc.has_value());
    double wv = 0;
    for (int m3 = 0; m3 < 3; ++m3)
      if (m.faces[loc->face][m3] == v)
        wv = loc->weights[m3];
    CHECK(wv == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("the centroid of a face splits evenly") {
    // face {s, s+1, s+10} of the cell northeast of the source
    const Vec3 c = (m.positions[s] + m.positions[s + 1] + m.positions[s + 10]) / 3.0;
    const Vec3 d = c - m.positions[s];
    auto loc = locate_in_gpc(g, m, d.norm(),
                             wrap_2pi(std::atan2(d.y(), d.x()) - phi0));
    REQUIRE(loc.has_value());
    for (int m3 = 0; m3 < 3; ++m3)
      CHECK(loc->weights[m3] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    std::array<int, 3> got = m.faces[loc->face];
    std::sort(got.begin(), got.end());
    CHECK(got == std::array<int, 3>{s, s + 1, s + 10});
  }

  SUBCASE("supports reconstruct arbitrary interior points") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ur(0.05, 1.55), ut(0.0, two_pi);
    for (int trial = 0; trial < 200; ++trial) {
      const double rho = ur(rng), theta = ut(rng);
      auto loc = locate_in_gpc(g, m, rho, theta);
      REQUIRE(loc.has_value());
      Vec3 rec = Vec3::Zero();
      double wsum = 0;
      for (int m3 = 0; m3 < 3; ++m3) {
        rec += loc->weights[m3] * m.positions[m.faces[loc->face][m3]];
        wsum += loc->weights[m3];
      }
      const Vec3 expect =
          m.positions[s] +
          rho * Vec3(std::cos(theta + phi0), std::sin(theta + phi0), 0.0);
      CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((rec - expect).norm() < 1e-9);
    }
  }

  SUBCASE("queries beyond the chart radius are rejected") {
    CHECK_THROWS_AS(locate_in_gpc(g, m, 3.5, 0.0), ConfigInvalid);
  }

  SUBCASE("points off the surface are unlocatable") {
    const GpcMap gc = compute_gpc(m, 0, 3.0); // corner source
    CHECK_FALSE(locate_in_gpc(gc, m, 1.5, 0.75 * two_pi / 2).has_value());
  }
}

TEST_CASE("window tensors on a flat grid") {
  const TriangleMesh m = make_grid(13, 13, 1.0);
  const WindowSpec spec{2, 8, 2.4};
  const std::vector<GpcMap> gpcs = compute_all_gpc(m, 4.4);
  const WindowTensors t = build_windows(m, gpcs, spec);

  REQUIRE(t.nv == m.n_vertices());
  REQUIRE(t.E.size() == t.n_points() * 3);
  REQUIRE(t.W.size() == t.n_points() * 3);
  REQUIRE(t.valid.size() == t.n_points());

  SUBCASE("weights sum to one on valid points and vanish on invalid ones") {
    for (int v = 0; v < t.nv; ++v)
      for (int i = 0; i < spec.n_rho; ++i)
        for (int j = 0; j < spec.n_theta; ++j) {
          double sum = 0;
          for (int m3 = 0; m3 < 3; ++m3)
            sum += t.W[t.support_index(v, i, j, m3)];
          if (t.valid[t.point_index(v, i, j)]) {
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            for (int m3 = 0; m3 < 3; ++m3) {
              const int e = t.E[t.support_index(v, i, j, m3)];
              CHECK(e >= 0);
              CHECK(e < t.nv);
            }
          } else {
            for (int m3 = 0; m3 < 3; ++m3)
              CHECK(t.W[t.support_index(v, i, j, m3)] == 0.0);
          }
        }
  }

  SUBCASE("a central vertex sees a complete window") {
    const int v = tu::grid_index(13, 6, 6);
    for (int i = 0; i < spec.n_rho; ++i)
      for (int j = 0; j < spec.n_theta; ++j)
        CHECK(t.valid[t.point_index(v, i, j)] == 1);
  }

  SUBCASE("supports reconstruct the window sample positions") {
    const double phi0 = tu::ref_angle(m, tu::grid_index(13, 6, 6));
    for (int vi = 4; vi <= 8; ++vi)
      for (int vj = 4; vj <= 8; ++vj) {
        const int v = tu::grid_index(13, vi, vj);
        for (int i = 0; i < spec.n_rho; ++i)
          for (int j = 0; j < spec.n_theta; ++j) {
            REQUIRE(t.valid[t.point_index(v, i, j)] == 1);
            Vec3 rec = Vec3::Zero();
            for (int m3 = 0; m3 < 3; ++m3)
              rec += t.W[t.support_index(v, i, j, m3)] *
                     m.positions[t.E[t.support_index(v, i, j, m3)]];
            const double a = spec.theta(j) + phi0;
            const Vec3 expect = m.positions[v] + spec.rho(i) * Vec3(std::cos(a),
                                                                    std::sin(a),
                                                                    0.0);
            CHECK((rec - expect).norm() < 1e-8);
          }
      }
  }

  SUBCASE("transported angles are trivial between flat interior vertices") {
    int checked = 0;
    for (int v = 0; v < t.nv; ++v) {
      if (m.is_boundary_vertex(v))
        continue;
      for (int i = 0; i < spec.n_rho; ++i)
        for (int j = 0; j < spec.n_theta; ++j) {
          if (!t.valid[t.point_index(v, i, j)])
            continue;
          bool all_interior = true;
          for (int m3 = 0; m3 < 3; ++m3)
            all_interior &=
                !m.is_boundary_vertex(t.E[t.support_index(v, i, j, m3)]);
          if (!all_interior)
            continue;
          for (int m3 = 0; m3 < 3; ++m3) {
            const size_t idx = t.support_index(v, i, j, m3);
            CHECK(bin_dist(t.gamma_floor[idx] + t.gamma_frac[idx] - j,
                           spec.n_theta) < 1e-6);
            ++checked;
          }
        }
    }
    CHECK(checked > 500);
  }

  SUBCASE("bin data stays in range") {
    for (size_t p = 0; p < t.n_points(); ++p)
      for (int m3 = 0; m3 < 3; ++m3) {
        CHECK(t.gamma_floor[p * 3 + m3] >= 0);
        CHECK(t.gamma_floor[p * 3 + m3] < spec.n_theta);
        CHECK(t.gamma_frac[p * 3 + m3] >= 0.0);
        CHECK(t.gamma_frac[p * 3 + m3] < 1.0);
      }
  }

  SUBCASE("boundary vertices keep partial windows without throwing") {
    int invalid = 0;
    for (int i = 0; i < spec.n_rho; ++i)
      for (int j = 0; j < spec.n_theta; ++j)
        invalid += t.valid[t.point_index(0, i, j)] == 0;
    CHECK(invalid > 0); // the grid corner loses most of its disc
  }
}

TEST_CASE("window tensors on a closed surface are fully valid") {
  const TriangleMesh m = make_icosphere(2);
  const WindowSpec spec{2, 8, 0.6};
  const WindowTensors t = build_windows(m, compute_all_gpc(m, 0.8), spec);
  for (size_t p = 0; p < t.n_points(); ++p)
    CHECK(t.valid[p] == 1);
}

TEST_CASE("interior vertices losing most of the window are an error") {
  const TriangleMesh m = make_grid(40, 3, 1.0);
  const WindowSpec spec{2, 8, 6.0};
  const std::vector<GpcMap> gpcs = compute_all_gpc(m, 6.0);
  CHECK_THROWS_AS(build_windows(m, gpcs, spec), TooManyInvalid);
}

TEST_CASE("charts narrower than the window radius are rejected") {
  const TriangleMesh m = make_grid(7, 7, 1.0);
  const std::vector<GpcMap> gpcs = compute_all_gpc(m, 2.0);
  CHECK_THROWS_AS(build_windows(m, gpcs, WindowSpec{2, 8, 2.4}), ConfigInvalid);
}

TEST_CASE("reference rotation permutes one vertex's slices") {
  const TriangleMesh m = make_grid(11, 11, 1.0);
  const WindowSpec spec{2, 8, 1.8};
  const WindowTensors t = build_windows(m, compute_all_gpc(m, 3.4), spec);
  const int v = tu::grid_index(11, 5, 5);
  const int nth = spec.n_theta;

  SUBCASE("k = 0 is the identity") {
    const WindowTensors r = rotate_reference(t, v, 0);
    CHECK(r.E == t.E);
    CHECK(r.W == t.W);
    CHECK(r.gamma_floor == t.gamma_floor);
    CHECK(r.gamma_frac == t.gamma_frac);
    CHECK(r.valid == t.valid);
  }

  SUBCASE("slices shift and transported bins compensate") {
    const int k = 3;
    const WindowTensors r = rotate_reference(t, v, k);
    for (int u = 0; u < t.nv; ++u)
      for (int i = 0; i < spec.n_rho; ++i)
        for (int j = 0; j < nth; ++j) {
          const int js = u == v ? (j + k) % nth : j; // source slice in t
          CHECK(r.valid[r.point_index(u, i, j)] ==
                t.valid[t.point_index(u, i, js)]);
          for (int m3 = 0; m3 < 3; ++m3) {
            const size_t dst = r.support_index(u, i, j, m3);
            const size_t src = t.support_index(u, i, js, m3);
            CHECK(r.E[dst] == t.E[src]);
            CHECK(r.W[dst] == t.W[src]);
            CHECK(r.gamma_frac[dst] == t.gamma_frac[src]);
            const int shift = t.E[src] == v ? k : 0;
            CHECK(r.gamma_floor[dst] ==
                  (t.gamma_floor[src] - shift + nth) % nth);
          }
        }
  }

  SUBCASE("opposite rotations cancel") {
    const WindowTensors r = rotate_reference(rotate_reference(t, v, 3), v, 5);
    CHECK(r.E == t.E);
    CHECK(r.W == t.W);
    CHECK(r.gamma_floor == t.gamma_floor);
    CHECK(r.gamma_frac == t.gamma_frac);
    CHECK(r.valid == t.valid);
  }

  SUBCASE("argument validation") {
    CHECK_THROWS_AS(rotate_reference(t, -1, 0), SourceOutOfRange);
    CHECK_THROWS_AS(rotate_reference(t, t.nv, 0), SourceOutOfRange);
    CHECK_THROWS_AS(rotate_reference(t, v, nth), ConfigInvalid);
    CHECK_THROWS_AS(rotate_reference(t, v, -1), ConfigInvalid);
  }
}
