#include "mdgc/container.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mdgc/angles.hpp"
#include "mdgc/error.hpp"

namespace mdgc {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'G', 'C', 'P', 'C', '0', '1'};

template <class T>
void put(std::ofstream& f, const T& x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof x);
}
template <class T>
void put_vec(std::ofstream& f, const std::vector<T>& v) {
  put(f, (std::uint64_t)v.size());
  if (!v.empty())
    f.write(reinterpret_cast<const char*>(v.data()),
            (std::streamsize)(v.size() * sizeof(T)));
}
template <class T>
T get(std::ifstream& f) {
  T x{};
  f.read(reinterpret_cast<char*>(&x), sizeof x);
  return x;
}
template <class T>
std::vector<T> get_vec(std::ifstream& f, std::uint64_t cap) {
  const std::uint64_t n = get<std::uint64_t>(f);
  if (n > cap) throw IoError("container corrupt: oversized array");
  std::vector<T> v(n);
  if (n) f.read(reinterpret_cast<char*>(v.data()), (std::streamsize)(n * sizeof(T)));
  return v;
}

void write_mesh(std::ofstream& f, const TriangleMesh& m) {
  put(f, (std::uint32_t)m.positions.size());
  put(f, (std::uint32_t)m.faces.size());
  for (const auto& p : m.positions) {
    put(f, p.x());
    put(f, p.y());
    put(f, p.z());
  }
  for (const auto& fc : m.faces) {
    put(f, (std::int32_t)fc[0]);
    put(f, (std::int32_t)fc[1]);
    put(f, (std::int32_t)fc[2]);
  }
}

TriangleMesh read_mesh(std::ifstream& f) {
  const std::uint32_t nv = get<std::uint32_t>(f);
  const std::uint32_t nf = get<std::uint32_t>(f);
  if (nv > (1u << 26) || nf > (1u << 27)) throw IoError("container corrupt: mesh size");
  std::vector<Eigen::Vector3d> pos(nv);
  for (auto& p : pos) {
    const double x = get<double>(f), y = get<double>(f), z = get<double>(f);
    p = {x, y, z};
  }
  std::vector<std::array<int, 3>> faces(nf);
  for (auto& fc : faces) {
    fc[0] = get<std::int32_t>(f);
    fc[1] = get<std::int32_t>(f);
    fc[2] = get<std::int32_t>(f);
  }
  return TriangleMesh::build(std::move(pos), std::move(faces));
}

// Reached chart entries only: (vertex, r, theta, gamma, flags).
struct GpcEntry {
  std::int32_t v;
  double r, theta, gamma;
  std::uint8_t flags;
};

void write_gpc(std::ofstream& f, const GpcMap& g) {
  put(f, (std::int32_t)g.source);
  put(f, g.r_max);
  std::uint32_t count = 0;
  for (size_t v = 0; v < g.r.size(); ++v)
    if (g.reached((int)v)) ++count;
  put(f, count);
  for (size_t v = 0; v < g.r.size(); ++v)
    if (g.reached((int)v)) {
      put(f, (std::int32_t)v);
      put(f, g.r[v]);
      put(f, g.theta[v]);
      put(f, g.gamma[v]);
      put(f, (std::uint8_t)g.flags[v]);
    }
}

GpcMap read_gpc(std::ifstream& f, int nv) {
  GpcMap g;
  g.source = get<std::int32_t>(f);
  g.r_max = get<double>(f);
  g.r.assign(nv, std::numeric_limits<double>::infinity());
  g.theta.assign(nv, 0.0);
  g.gamma.assign(nv, 0.0);
  g.flags.assign(nv, 0);
  const std::uint32_t count = get<std::uint32_t>(f);
  if ((int)count > nv) throw IoError("container corrupt: chart entry count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::int32_t v = get<std::int32_t>(f);
    if (v < 0 || v >= nv) throw IoError("container corrupt: chart vertex index");
    g.r[v] = get<double>(f);
    g.theta[v] = get<double>(f);
    g.gamma[v] = get<double>(f);
    g.flags[v] = get<std::uint8_t>(f);
  }
  return g;
}

void write_windows(std::ofstream& f, const WindowTensors& w) {
  put(f, (std::uint32_t)w.nv);
  put(f, (std::uint32_t)w.spec.n_rho);
  put(f, (std::uint32_t)w.spec.n_theta);
  put(f, w.spec.radius);
  put_vec(f, w.E);
  put_vec(f, w.W);
  put_vec(f, w.gamma_floor);
  put_vec(f, w.gamma_frac);
  put_vec(f, w.valid);
}

WindowTensors read_windows(std::ifstream& f) {
  WindowTensors w;
  w.nv = (int)get<std::uint32_t>(f);
  w.spec.n_rho = (int)get<std::uint32_t>(f);
  w.spec.n_theta = (int)get<std::uint32_t>(f);
  w.spec.radius = get<double>(f);
  const std::uint64_t cap = (std::uint64_t)w.nv * w.spec.n_rho * w.spec.n_theta * 3;
  w.E = get_vec<int>(f, cap);
  w.W = get_vec<double>(f, cap);
  w.gamma_floor = get_vec<int>(f, cap);
  w.gamma_frac = get_vec<double>(f, cap);
  w.valid = get_vec<std::uint8_t>(f, cap);
  return w;
}

void write_map(std::ofstream& f, const SimplificationMap& m) {
  std::vector<std::int32_t> f2c(m.fine_to_coarse.begin(), m.fine_to_coarse.end());
  std::vector<std::int32_t> c2f(m.coarse_to_fine.begin(), m.coarse_to_fine.end());
  put_vec(f, f2c);
  put_vec(f, c2f);
  put_vec(f, m.angle_offset);
}

void read_map(std::ifstream& f, SimplificationMap* m) {
  const auto f2c = get_vec<std::int32_t>(f, 1u << 26);
  const auto c2f = get_vec<std::int32_t>(f, 1u << 26);
  m->fine_to_coarse.assign(f2c.begin(), f2c.end());
  m->coarse_to_fine.assign(c2f.begin(), c2f.end());
  m->angle_offset = get_vec<double>(f, 1u << 26);
}

} // namespace

PrecomputeContainer precompute(const TriangleMesh& mesh, const PrecomputeParams& p) {
  p.spec.validate();
  if (p.r_max < p.spec.radius)
    throw ConfigInvalid("chart truncation radius must cover the window radius");
  if (p.radius_scale <= 0) throw ConfigInvalid("radius scale must be positive");
  for (size_t k = 0; k < p.level_targets.size(); ++k) {
    const int prev = k == 0 ? (int)mesh.positions.size() : p.level_targets[k - 1];
    if (p.level_targets[k] > prev)
      throw ConfigInvalid("level vertex targets must be non-increasing");
  }

  PrecomputeContainer c;
  c.mesh_hash = mesh.content_hash();
  c.spec = p.spec;
  c.r_max = p.r_max;
  c.eps = p.eps;
  c.radius_scale = p.radius_scale;

  double radius = p.spec.radius, r_max = p.r_max;
  for (size_t L = 0; L <= p.level_targets.size(); ++L) {
    PrecomputeLevel lev;
    if (L == 0) {
      lev.mesh = mesh;
    } else {
      // the coarse mesh the previous level's map produced becomes this level
      lev.mesh = std::move(c.levels.back().down.coarse);
      c.levels.back().down.coarse = TriangleMesh{};
    }
    lev.gpcs = compute_all_gpc(lev.mesh, r_max, p.eps);
    WindowSpec spec = p.spec;
    spec.radius = radius;
    lev.windows = build_windows(lev.mesh, lev.gpcs, spec);
    if (L < p.level_targets.size()) {
      lev.has_down = true;
      lev.down = simplify(lev.mesh, p.level_targets[L]);
      radius *= p.radius_scale;
      r_max *= p.radius_scale;
    }
    c.levels.push_back(std::move(lev));
  }
  return c;
}

void save_container(const PrecomputeContainer& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(kMagic, 8);
  put(f, (std::uint32_t)1); // version
  put(f, c.mesh_hash);
  put(f, (std::uint32_t)c.spec.n_rho);
  put(f, (std::uint32_t)c.spec.n_theta);
  put(f, c.spec.radius);
  put(f, c.r_max);
  put(f, c.eps);
  put(f, c.radius_scale);
  put(f, (std::uint32_t)c.levels.size());
  for (const auto& lev : c.levels) {
    write_mesh(f, lev.mesh);
    put(f, (std::uint32_t)lev.gpcs.size());
    for (const auto& g : lev.gpcs) write_gpc(f, g);
    write_windows(f, lev.windows);
    put(f, (std::uint8_t)(lev.has_down ? 1 : 0));
    if (lev.has_down) write_map(f, lev.down);
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

PrecomputeContainer load_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("'" + path + "' is not a precompute container");
  if (get<std::uint32_t>(f) != 1) throw IoError("unsupported container version");
  PrecomputeContainer c;
  c.mesh_hash = get<std::uint64_t>(f);
  c.spec.n_rho = (int)get<std::uint32_t>(f);
  c.spec.n_theta = (int)get<std::uint32_t>(f);
  c.spec.radius = get<double>(f);
  c.r_max = get<double>(f);
  c.eps = get<double>(f);
  c.radius_scale = get<double>(f);
  const std::uint32_t nl = get<std::uint32_t>(f);
  if (nl > 64) throw IoError("container corrupt: level count");
  for (std::uint32_t L = 0; L < nl; ++L) {
    PrecomputeLevel lev;
    lev.mesh = read_mesh(f);
    const std::uint32_t ng = get<std::uint32_t>(f);
    if (ng != lev.mesh.positions.size())
      throw IoError("container corrupt: chart count");
    lev.gpcs.reserve(ng);
    for (std::uint32_t k = 0; k < ng; ++k) {
      GpcMap g = read_gpc(f, (int)lev.mesh.positions.size());
      g.eps = c.eps;
      lev.gpcs.push_back(std::move(g));
    }
    lev.windows = read_windows(f);
    lev.has_down = get<std::uint8_t>(f) != 0;
    if (lev.has_down) read_map(f, &lev.down);
    c.levels.push_back(std::move(lev));
    if (!f) throw IoError("container truncated");
  }
  return c;
}

std::vector<std::string> verify_container(const PrecomputeContainer& c) {
  std::vector<std::string> problems;
  auto bad = [&problems](const std::string& s) { problems.push_back(s); };
  if (c.levels.empty()) {
    bad("container has no levels");
    return problems;
  }
  if (c.levels[0].mesh.content_hash() != c.mesh_hash)
    bad("base mesh does not match the recorded content hash");

  for (size_t L = 0; L < c.levels.size(); ++L) {
    const auto& lev = c.levels[L];
    const std::string tag = "level " + std::to_string(L) + ": ";
    const int nv = (int)lev.mesh.positions.size();
    if ((int)lev.gpcs.size() != nv) {
      bad(tag + "chart count mismatch");
      continue;
    }
    for (int s = 0; s < nv; ++s) {
      const GpcMap& g = lev.gpcs[s];
      if (g.source != s) bad(tag + "chart " + std::to_string(s) + " has wrong source");
      if (!(g.r[s] == 0.0)) bad(tag + "chart " + std::to_string(s) + " source radius nonzero");
      const double lim = (1.0 + c.eps) * g.r_max;
      for (int v = 0; v < nv; ++v) {
        if (!g.reached(v)) continue;
        if (!(g.r[v] >= 0.0) || g.r[v] > lim) {
          bad(tag + "chart " + std::to_string(s) + " radius out of range at vertex " +
              std::to_string(v));
          break;
        }
        if (g.theta[v] < 0 || g.theta[v] >= two_pi || g.gamma[v] < 0 ||
            g.gamma[v] >= two_pi) {
          bad(tag + "chart " + std::to_string(s) + " angle out of [0, 2pi) at vertex " +
              std::to_string(v));
          break;
        }
      }
    }

    const WindowTensors& w = lev.windows;
    if (w.nv != nv) {
      bad(tag + "window vertex count mismatch");
      continue;
    }
    const int nr = w.spec.n_rho, nth = w.spec.n_theta;
    bool w_ok = true;
    for (int v = 0; v < nv && w_ok; ++v)
      for (int i = 0; i < nr && w_ok; ++i)
        for (int j = 0; j < nth && w_ok; ++j) {
          const size_t pi = w.point_index(v, i, j);
          double sum = 0;
          for (int m = 0; m < 3; ++m) {
            const size_t s = w.support_index(v, i, j, m);
            if (w.E[s] < 0 || w.E[s] >= nv) {
              bad(tag + "window support index out of range");
              w_ok = false;
              break;
            }
            if (w.W[s] < 0 || w.gamma_frac[s] < 0 || w.gamma_frac[s] >= 1.0 ||
                w.gamma_floor[s] < 0 || w.gamma_floor[s] >= nth) {
              bad(tag + "window entry out of range");
              w_ok = false;
              break;
            }
            sum += w.W[s];
          }
          if (!w_ok) break;
          const double want = w.valid[pi] ? 1.0 : 0.0;
          if (std::abs(sum - want) > 1e-9) {
            bad(tag + "window weights do not sum to " + (w.valid[pi] ? "1" : "0"));
            w_ok = false;
          }
        }

    if (lev.has_down) {
      if (L + 1 >= c.levels.size()) {
        bad(tag + "map to a missing level");
        continue;
      }
      const int nvc = (int)c.levels[L + 1].mesh.positions.size();
      const auto& m = lev.down;
      if ((int)m.fine_to_coarse.size() != nv || (int)m.coarse_to_fine.size() != nvc ||
          (int)m.angle_offset.size() != nv) {
        bad(tag + "simplification map sizes mismatch");
        continue;
      }
      for (int v = 0; v < nv; ++v)
        if (m.fine_to_coarse[v] < 0 || m.fine_to_coarse[v] >= nvc) {
          bad(tag + "fine-to-coarse index out of range");
          break;
        }
      for (int u = 0; u < nvc; ++u)
        if (m.coarse_to_fine[u] < 0 || m.coarse_to_fine[u] >= nv ||
            m.fine_to_coarse[m.coarse_to_fine[u]] != u) {
          bad(tag + "coarse-to-fine is not a section of fine-to-coarse");
          break;
        }
    } else if (L + 1 < c.levels.size()) {
      bad(tag + "missing map to the next level");
    }
  }
  return problems;
}

NetContext make_context(const PrecomputeContainer& c) {
  NetContext ctx;
  for (const auto& lev : c.levels) {
    LevelData d;
    d.mesh = &lev.mesh;
    d.tensors = &lev.windows;
    d.areas = vertex_areas(lev.mesh);
    ctx.levels.push_back(std::move(d));
    if (lev.has_down) ctx.maps.push_back(&lev.down);
  }
  return ctx;
}

} // namespace mdgc
