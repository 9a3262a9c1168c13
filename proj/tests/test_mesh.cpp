#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "test_utils.hpp"

using namespace mdgc;

TEST_CASE("grid build: counts, interior and boundary rings") {
  const TriangleMesh m = make_grid(5, 4, 1.0);
  CHECK(m.n_vertices() == 20);
  CHECK(m.n_faces() == 2 * 4 * 3);

  const int center = tu::grid_index(5, 2, 1);
  const OneRing& r = m.ring(center);
  CHECK_FALSE(r.is_boundary);
  CHECK(r.neighbors.size() == 6);
  CHECK(r.alphas.size() == 6);

  double total = 0;
  for (double a : r.alphas) {
    CHECK(a > 0);
    total += a;
  }
  CHECK(total == doctest::Approx(two_pi).epsilon(1e-12));
  CHECK(r.angles[0] == 0.0);
  for (size_t j = 1; j < r.angles.size(); ++j)
    CHECK(r.angles[j] > r.angles[j - 1]);

  CHECK(m.is_boundary_vertex(0));
  const OneRing& b = m.ring(0);
  CHECK(b.is_boundary);
  // corner vertex of the grid: neighbors right, diagonal, up
  CHECK(b.neighbors.size() == 3);
}

TEST_CASE("one-ring neighbors wind counter-clockwise on a flat grid") {
  const TriangleMesh m = make_grid(5, 5, 1.0);
  const int v = tu::grid_index(5, 2, 2);
  const OneRing& r = m.ring(v);
  // cumulative chart angles must match the world angles measured from the
  // reference neighbor, increasing counter-clockwise
  const double phi0 = tu::ref_angle(m, v);
  for (size_t j = 0; j < r.neighbors.size(); ++j) {
    const Vec3 d = m.positions[r.neighbors[j]] - m.positions[v];
    const double world = wrap_2pi(std::atan2(d.y(), d.x()) - phi0);
    CHECK(angle_dist(r.angles[j], world) < 1e-12);
  }
}

TEST_CASE("closed meshes get a globally consistent orientation") {
  for (const TriangleMesh& m : {make_cube(), make_icosphere(1)}) {
    // every directed edge appears exactly once over all faces
    std::map<std::pair<int, int>, int> count;
    for (const auto& f : m.faces)
      for (int k = 0; k < 3; ++k)
        count[{f[k], f[(k + 1) % 3]}]++;
    for (const auto& [e, c] : count) {
      CHECK(c == 1);
      CHECK(count.count({e.second, e.first}) == 1);
    }
    for (int v = 0; v < m.n_vertices(); ++v)
      CHECK_FALSE(m.is_boundary_vertex(v));
  }
}

TEST_CASE("icosphere generator: counts and unit radius") {
  CHECK(make_icosphere(0).n_vertices() == 12);
  CHECK(make_icosphere(1).n_vertices() == 42);
  CHECK(make_icosphere(2).n_vertices() == 162);
  const TriangleMesh m = make_icosphere(2);
  for (const Vec3& p : m.positions)
    CHECK(p.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build rejects broken inputs") {
  std::vector<Vec3> pos = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  SUBCASE("face referencing a vertex twice") {
    CHECK_THROWS_AS(TriangleMesh::build(pos, {{0, 0, 1}}), DegenerateFace);
  }
  SUBCASE("near-zero area face") {
    std::vector<Vec3> flat = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    CHECK_THROWS_AS(TriangleMesh::build(flat, {{0, 1, 2}}), DegenerateFace);
  }
  SUBCASE("face index out of range") {
    CHECK_THROWS_AS(TriangleMesh::build(pos, {{0, 1, 9}}), ParseError);
  }
  SUBCASE("edge shared by three faces") {
    std::vector<Vec3> p5 = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, -1, 0}};
    CHECK_THROWS_AS(
        TriangleMesh::build(p5, {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}}), NonManifold);
  }
  SUBCASE("two fans meeting at one vertex") {
    std::vector<Vec3> p5 = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {-1, 0, 0}, {-1, -1, 0}};
    CHECK_THROWS_AS(TriangleMesh::build(p5, {{0, 1, 2}, {0, 3, 4}}),
                    NonManifoldStar);
  }
  SUBCASE("non-orientable surface") {
    std::vector<Vec3> mp;
    std::vector<std::array<int, 3>> mf;
    tu::mobius_strip(mp, mf);
    CHECK_THROWS_AS(TriangleMesh::build(mp, mf), NonManifold);
  }
}

TEST_CASE("ring lookups") {
  const TriangleMesh m = make_grid(4, 4, 1.0);
  const int v = tu::grid_index(4, 1, 1);
  const OneRing& r = m.ring(v);
  for (size_t j = 0; j < r.neighbors.size(); ++j) {
    CHECK(r.index_of(r.neighbors[j]) == (int)j);
    CHECK(r.angle_of(r.neighbors[j]) == r.angles[j]);
  }
  const int far = tu::grid_index(4, 3, 3);
  CHECK(r.index_of(far) == -1);
  CHECK_THROWS_AS(r.angle_of(far), NotAdjacent);
}

TEST_CASE("order_one_ring: explicit start relabels the chart") {
  const TriangleMesh m = make_grid(5, 5, 1.0);
  const int v = tu::grid_index(5, 2, 2);
  const OneRing& base = m.ring(v);
  const int start = base.neighbors[2];
  const OneRing alt = order_one_ring(m, v, start);

  CHECK(alt.neighbors[0] == start);
  CHECK(alt.angles[0] == 0.0);
  // same cyclic order, angles shifted by the old angle of the new start
  const double beta = base.angle_of(start);
  for (size_t j = 0; j < alt.neighbors.size(); ++j) {
    const double expect = wrap_2pi(base.angle_of(alt.neighbors[j]) - beta);
    CHECK(angle_dist(alt.angles[j], expect) < 1e-12);
  }

  // boundary rings cannot start mid-fan
  const int corner = 0;
  const OneRing& br = m.ring(corner);
  CHECK_THROWS_AS(order_one_ring(m, corner, br.neighbors[1]), NotAdjacent);
  CHECK_THROWS_AS(order_one_ring(m, 999, -1), SourceOutOfRange);
}

TEST_CASE("chart_angle_of_direction matches world angles on a flat chart") {
  const TriangleMesh m = make_grid(5, 5, 1.0);
  const int v = tu::grid_index(5, 2, 2);
  const double phi0 = tu::ref_angle(m, v);
  CHECK(chart_angle_of_direction(m, v, tu::ref_dir(m, v)) ==
        doctest::Approx(0.0).epsilon(1e-12));
  for (double world : {0.0, 0.7, 2.0, 4.0, 5.9}) {
    const Vec3 d(std::cos(world), std::sin(world), 0.0);
    CHECK(angle_dist(chart_angle_of_direction(m, v, d), wrap_2pi(world - phi0)) <
          1e-12);
  }
}

TEST_CASE("vertex areas sum to three times the surface area") {
  for (const TriangleMesh& m : {make_grid(4, 3, 0.5), make_icosphere(2)}) {
    double surface = 0;
    for (double a : m.face_areas)
      surface += a;
    const std::vector<double> va = vertex_areas(m);
    double total = 0;
    for (double a : va)
      total += a;
    CHECK(total == doctest::Approx(3.0 * surface).epsilon(1e-12));
  }
  // interior grid vertex touches six right triangles of area h*h/2
  const TriangleMesh g = make_grid(3, 3, 1.0);
  CHECK(vertex_areas(g)[tu::grid_index(3, 1, 1)] ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("OFF save/load round trip is exact") {
  const TriangleMesh m = make_noisy_icosphere(1, 0.05, 7);
  const std::string path = tu::scratch("roundtrip.off");
  save_off(m, path);
  const TriangleMesh back = load_mesh(path);
  REQUIRE(back.n_vertices() == m.n_vertices());
  REQUIRE(back.n_faces() == m.n_faces());
  CHECK(back.content_hash() == m.content_hash());
}

TEST_CASE("OBJ parsing") {
  const std::string path = tu::scratch("tiny.obj");
  tu::write_text(path,
                 "# comment\n"
                 "v 0 0 0\n"
                 "v 1 0 0\n"
                 "v 0 1 0\n"
                 "v 1 1 1\n"
                 "vn 0 0 1\n"
                 "f 1 2 3\n"
                 "f 2/1 4/2/3 3\n");
  const TriangleMesh m = load_mesh(path);
  CHECK(m.n_vertices() == 4);
  CHECK(m.n_faces() == 2);
  CHECK((m.positions[3] - Vec3(1, 1, 1)).norm() == 0.0);

  tu::write_text(path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 4 3\n");
  CHECK_THROWS_AS(load_mesh(path), ParseError);
  tu::write_text(path, "v 0 zero 0\n");
  CHECK_THROWS_AS(load_mesh(path), ParseError);
  CHECK_THROWS_AS(load_mesh(tu::scratch("missing.obj")), IoError);
  CHECK_THROWS_AS(load_mesh(tu::scratch("notes.txt")), ParseError);
}

TEST_CASE("content hash tracks geometry changes") {
  const TriangleMesh a = make_icosphere(1);
  TriangleMesh b = a;
  CHECK(a.content_hash() == b.content_hash());
  std::vector<Vec3> pos = a.positions;
  pos[0] *= 1.0 + 1e-12;
  const TriangleMesh c = TriangleMesh::build(pos, a.faces);
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("simplify: target size, collapse chains, carrier vertices") {
  const TriangleMesh m = make_icosphere(2);
  const int target = 80;
  const SimplificationMap map = simplify(m, target);

  CHECK(map.coarse.n_vertices() <= (int)std::ceil(1.05 * target));
  CHECK(map.coarse.n_vertices() >= 4);
  CHECK((int)map.fine_to_coarse.size() == m.n_vertices());
  CHECK((int)map.angle_offset.size() == m.n_vertices());
  CHECK((int)map.coarse_to_fine.size() == map.coarse.n_vertices());

  for (int v = 0; v < m.n_vertices(); ++v) {
    CHECK(map.fine_to_coarse[v] >= 0);
    CHECK(map.fine_to_coarse[v] < map.coarse.n_vertices());
    CHECK(map.angle_offset[v] >= 0.0);
    CHECK(map.angle_offset[v] < two_pi);
  }
  for (int u = 0; u < map.coarse.n_vertices(); ++u) {
    const int carrier = map.coarse_to_fine[u];
    REQUIRE(carrier >= 0);
    REQUIRE(carrier < m.n_vertices());
    CHECK(map.fine_to_coarse[carrier] == u);
  }
  // every coarse vertex has a non-empty preimage by construction; check the
  // preimages partition the fine vertex set
  std::vector<int> count(map.coarse.n_vertices(), 0);
  for (int v = 0; v < m.n_vertices(); ++v)
    count[map.fine_to_coarse[v]]++;
  for (int c : count)
    CHECK(c >= 1);
}

TEST_CASE("simplify: identity at target N_v") {
  const TriangleMesh m = make_icosphere(1);
  const SimplificationMap map = simplify(m, m.n_vertices());
  CHECK(map.coarse.n_vertices() == m.n_vertices());
  for (int v = 0; v < m.n_vertices(); ++v) {
    CHECK(map.fine_to_coarse[v] == v);
    CHECK(map.coarse_to_fine[v] == v);
  }
}

TEST_CASE("simplify: bad targets") {
  const TriangleMesh m = make_cube();
  CHECK_THROWS_AS(simplify(m, 3), ConfigInvalid);
  CHECK_THROWS_AS(simplify(m, 9), ConfigInvalid);

  // two disjoint tetrahedra: every collapse is blocked (the remapped face
  // would coincide with an existing one, flipped), so 4 is unreachable
  std::vector<Vec3> pos;
  std::vector<std::array<int, 3>> faces;
  for (int t = 0; t < 2; ++t) {
    const double off = 5.0 * t;
    const int b = 4 * t;
    pos.emplace_back(off, 0, 0);
    pos.emplace_back(off + 1, 0, 0);
    pos.emplace_back(off, 1, 0);
    pos.emplace_back(off, 0, 1);
    faces.push_back({b + 0, b + 2, b + 1});
    faces.push_back({b + 0, b + 1, b + 3});
    faces.push_back({b + 1, b + 2, b + 3});
    faces.push_back({b + 0, b + 3, b + 2});
  }
  const TriangleMesh twin = TriangleMesh::build(pos, faces);
  CHECK_THROWS_AS(simplify(twin, 4), TargetTooSmall);
}

TEST_CASE("simplify on a flat grid keeps the patch planar") {
  const TriangleMesh m = make_grid(9, 9, 1.0);
  const SimplificationMap map = simplify(m, 30);
  for (const Vec3& p : map.coarse.positions)
    CHECK(std::abs(p.z()) < 1e-12);
}
