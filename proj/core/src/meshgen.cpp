#include "mdgc/meshgen.hpp"

#include <cmath>
#include <map>
#include <random>

namespace mdgc {

TriangleMesh make_grid(int nx, int ny, double spacing) {
  std::vector<Vec3> pos;
  pos.reserve((size_t)nx * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix)
      pos.emplace_back(ix * spacing, iy * spacing, 0.0);
  std::vector<std::array<int, 3>> faces;
  faces.reserve(2 * (size_t)(nx - 1) * (ny - 1));
  for (int iy = 0; iy + 1 < ny; ++iy)
    for (int ix = 0; ix + 1 < nx; ++ix) {
      int a = iy * nx + ix, b = a + 1, c = a + nx, d = c + 1;
      faces.push_back({a, b, d});
      faces.push_back({a, d, c});
    }
  return TriangleMesh::build(std::move(pos), std::move(faces));
}

static void icosahedron(std::vector<Vec3>& pos,
                        std::vector<std::array<int, 3>>& faces) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  pos = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : pos)
    p.normalize();
  faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
           {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
           {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
           {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
}

TriangleMesh make_icosphere(int subdiv) {
  std::vector<Vec3> pos;
  std::vector<std::array<int, 3>> faces;
  icosahedron(pos, faces);
  for (int s = 0; s < subdiv; ++s) {
    std::map<uint64_t, int> midpoint;
    auto mid = [&](int a, int b) {
      uint64_t key = TriangleMesh::edge_key(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end())
        return it->second;
      int idx = (int)pos.size();
      pos.push_back(((pos[a] + pos[b]) * 0.5).normalized());
      midpoint[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(4 * faces.size());
    for (const auto& f : faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  return TriangleMesh::build(std::move(pos), std::move(faces));
}

TriangleMesh make_noisy_icosphere(int subdiv, double amplitude, uint64_t seed) {
  TriangleMesh sphere = make_icosphere(subdiv);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-amplitude, amplitude);
  std::vector<Vec3> pos = sphere.positions;
  for (auto& p : pos)
    p *= 1.0 + uni(rng);
  return TriangleMesh::build(std::move(pos), sphere.faces);
}

TriangleMesh make_cube() {
  std::vector<Vec3> pos = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 2, 1}, {0, 3, 2}, // bottom (z=0), outward -z
      {4, 5, 6}, {4, 6, 7}, // top
      {0, 1, 5}, {0, 5, 4}, // front (y=0)
      {1, 2, 6}, {1, 6, 5}, // right
      {2, 3, 7}, {2, 7, 6}, // back
      {3, 0, 4}, {3, 4, 7}, // left
  };
  return TriangleMesh::build(std::move(pos), std::move(faces));
}

} // namespace mdgc
