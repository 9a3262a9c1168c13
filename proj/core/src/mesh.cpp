#include "mdgc/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "mdgc/angles.hpp"

namespace mdgc {

// --- OneRing ---------------------------------------------------------------

int OneRing::index_of(int neighbor) const {
  for (size_t i = 0; i < neighbors.size(); ++i)
    if (neighbors[i] == neighbor)
      return (int)i;
  return -1;
}

double OneRing::angle_of(int neighbor) const {
  int i = index_of(neighbor);
  if (i < 0)
    throw NotAdjacent("vertex " + std::to_string(neighbor) +
                      " is not in the one-ring of " + std::to_string(center));
  return angles[i];
}

// --- construction ----------------------------------------------------------

static double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

// Re-winds faces to a single consistent orientation by flood fill over the
// face adjacency; throws NonManifold for non-orientable input.
static void orient_faces(std::vector<std::array<int, 3>>& faces,
                         const std::unordered_map<uint64_t, EdgeFaces>& edge_faces) {
  int nf = (int)faces.size();
  std::vector<int8_t> state(nf, 0); // 0 unvisited, 1 fixed
  for (int seed = 0; seed < nf; ++seed) {
    if (state[seed])
      continue;
    state[seed] = 1;
    std::deque<int> queue{seed};
    while (!queue.empty()) {
      int f = queue.front();
      queue.pop_front();
      const auto& t = faces[f];
      for (int e = 0; e < 3; ++e) {
        int a = t[e], b = t[(e + 1) % 3];
        auto it = edge_faces.find(TriangleMesh::edge_key(a, b));
        const EdgeFaces& ef = it->second;
        int g = (ef.f0 == f) ? ef.f1 : ef.f0;
        if (g < 0)
          continue;
        // Compatible orientation: the shared edge runs in opposite
        // directions in the two windings.
        auto& u = faces[g];
        bool same_dir = false;
        for (int k = 0; k < 3; ++k)
          if (u[k] == a && u[(k + 1) % 3] == b)
            same_dir = true;
        if (!state[g]) {
          if (same_dir)
            std::swap(u[1], u[2]);
          state[g] = 1;
          queue.push_back(g);
        } else if (same_dir) {
          throw NonManifold("mesh is not orientable");
        }
      }
    }
  }
}

TriangleMesh TriangleMesh::build(std::vector<Vec3> positions,
                                 std::vector<std::array<int, 3>> faces) {
  TriangleMesh m;
  m.positions = std::move(positions);
  m.faces = std::move(faces);
  int nv = m.n_vertices(), nf = m.n_faces();

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  for (const auto& p : m.positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double diag2 = nv ? (hi - lo).squaredNorm() : 0.0;
  double area_floor = 1e-12 * diag2;

  for (int f = 0; f < nf; ++f) {
    const auto& t = m.faces[f];
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= nv)
        throw ParseError("face " + std::to_string(f) + " references vertex " +
                         std::to_string(t[k]) + " outside [0, " +
                         std::to_string(nv) + ")");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw DegenerateFace("face " + std::to_string(f) +
                           " has repeated vertex indices");
    if (triangle_area(m.positions[t[0]], m.positions[t[1]], m.positions[t[2]]) <=
        area_floor)
      throw DegenerateFace("face " + std::to_string(f) + " has near-zero area");
  }

  for (int f = 0; f < nf; ++f) {
    const auto& t = m.faces[f];
    for (int e = 0; e < 3; ++e) {
      uint64_t key = edge_key(t[e], t[(e + 1) % 3]);
      auto& ef = m.edge_faces[key];
      if (ef.f0 < 0)
        ef.f0 = f;
      else if (ef.f1 < 0)
        ef.f1 = f;
      else
        throw NonManifold("edge shared by more than two faces");
    }
  }

  orient_faces(m.faces, m.edge_faces);

  m.vertex_faces.assign(nv, {});
  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k)
      m.vertex_faces[m.faces[f][k]].push_back(f);

  m.face_areas.resize(nf);
  for (int f = 0; f < nf; ++f) {
    const auto& t = m.faces[f];
    m.face_areas[f] =
        triangle_area(m.positions[t[0]], m.positions[t[1]], m.positions[t[2]]);
  }

  m.vertex_normals.assign(nv, Vec3::Zero());
  for (int f = 0; f < nf; ++f) {
    const auto& t = m.faces[f];
    Vec3 fn = (m.positions[t[1]] - m.positions[t[0]])
                  .cross(m.positions[t[2]] - m.positions[t[0]]);
    for (int k = 0; k < 3; ++k)
      m.vertex_normals[t[k]] += 0.5 * fn; // length 2*area, area weighting
  }
  for (auto& n : m.vertex_normals) {
    double len = n.norm();
    if (len > 0)
      n /= len;
  }

  m.rings.resize(nv);
  for (int v = 0; v < nv; ++v)
    m.rings[v] = order_one_ring(m, v);
  return m;
}

OneRing order_one_ring(const TriangleMesh& mesh, int v, int start_neighbor) {
  if (v < 0 || v >= mesh.n_vertices())
    throw SourceOutOfRange("vertex index out of range");
  OneRing ring;
  ring.center = v;

  // succ[u] = w where (v, u, w) is a corner of an incident face, i.e. the
  // counter-clockwise successor of u around v.
  std::map<int, int> succ;
  std::map<int, int> indeg;
  for (int f : mesh.vertex_faces[v]) {
    const auto& t = mesh.faces[f];
    int k = (t[0] == v) ? 0 : (t[1] == v ? 1 : 2);
    int u = t[(k + 1) % 3], w = t[(k + 2) % 3];
    if (succ.count(u))
      throw NonManifoldStar("one-ring traversal branches at vertex " +
                            std::to_string(v));
    succ[u] = w;
    indeg[u]; // ensure key
    indeg[w]++;
  }
  if (succ.empty())
    return ring; // isolated vertex: empty ring

  int start = -1;
  bool boundary = false;
  for (auto& [u, d] : indeg)
    if (succ.count(u) && d == 0) {
      if (start != -1)
        throw NonManifoldStar("multiple fans at vertex " + std::to_string(v));
      start = u;
      boundary = true;
    }
  if (!boundary) {
    // interior: every listed neighbor must close a single cycle
    start = succ.begin()->first; // lowest index (map is ordered)
  }
  if (start_neighbor >= 0) {
    if (boundary && start_neighbor != start)
      throw NotAdjacent("boundary ring must start at the open edge");
    if (!succ.count(start_neighbor))
      throw NotAdjacent("start vertex is not a ring neighbor");
    start = start_neighbor;
  }

  int u = start;
  size_t guard = succ.size() + 1;
  while (true) {
    ring.neighbors.push_back(u);
    auto it = succ.find(u);
    if (it == succ.end())
      break; // boundary end (last neighbor has no outgoing corner)
    u = it->second;
    if (u == start)
      break; // closed the cycle
    if (ring.neighbors.size() >= guard)
      throw NonManifoldStar("one-ring traversal does not close at vertex " +
                            std::to_string(v));
  }
  size_t listed = ring.neighbors.size();
  size_t all = indeg.size();
  if (listed != all)
    throw NonManifoldStar("disconnected fans at vertex " + std::to_string(v));
  ring.is_boundary = boundary;

  int n = (int)listed;
  ring.radii.resize(n);
  for (int j = 0; j < n; ++j)
    ring.radii[j] = (mesh.positions[ring.neighbors[j]] - mesh.positions[v]).norm();

  int n_sectors = boundary ? n - 1 : n;
  std::vector<double> raw(n_sectors);
  double total = 0;
  for (int j = 0; j < n_sectors; ++j) {
    Vec3 e0 = mesh.positions[ring.neighbors[j]] - mesh.positions[v];
    Vec3 e1 = mesh.positions[ring.neighbors[(j + 1) % n]] - mesh.positions[v];
    double c = e0.dot(e1) / (e0.norm() * e1.norm());
    raw[j] = std::acos(std::clamp(c, -1.0, 1.0));
    total += raw[j];
  }
  ring.raw_total = total;
  double scale = (!boundary && total > 0) ? two_pi / total : 1.0;
  ring.alphas.resize(n_sectors);
  ring.angles.resize(n);
  double cum = 0;
  for (int j = 0; j < n; ++j) {
    ring.angles[j] = cum;
    if (j < n_sectors) {
      ring.alphas[j] = raw[j] * scale;
      cum += ring.alphas[j];
    }
  }
  return ring;
}

double chart_angle_of_direction(const TriangleMesh& mesh, int v, const Vec3& dir) {
  const OneRing& ring = mesh.ring(v);
  if (ring.neighbors.empty())
    throw NonManifoldStar("vertex has no ring");
  const Vec3& n = mesh.vertex_normals[v];
  Vec3 e0 = mesh.positions[ring.neighbors[0]] - mesh.positions[v];
  Vec3 u1 = (e0 - n * n.dot(e0)).normalized();
  Vec3 u2 = n.cross(u1);
  auto planar = [&](const Vec3& x) {
    return wrap_2pi(std::atan2(x.dot(u2), x.dot(u1)));
  };
  double bd = planar(dir - n * n.dot(dir));

  int n_nb = (int)ring.neighbors.size();
  int n_sectors = (int)ring.alphas.size();
  std::vector<double> beta(n_nb);
  for (int j = 0; j < n_nb; ++j)
    beta[j] = planar(mesh.positions[ring.neighbors[j]] - mesh.positions[v]);

  for (int j = 0; j < n_sectors; ++j) {
    double span = wrap_2pi(beta[(j + 1) % n_nb] - beta[j]);
    if (span <= 0)
      span = two_pi;
    double off = wrap_2pi(bd - beta[j]);
    if (off < span || j == n_sectors - 1) {
      if (off >= span) {
        if (!ring.is_boundary)
          off = std::fmod(off, span); // fold numerically stray hit
        else
          return wrap_2pi(bd - beta[0]); // outside an open fan: raw angle
      }
      return wrap_2pi(ring.angles[j] + (off / span) * ring.alphas[j]);
    }
  }
  return wrap_2pi(bd - beta[0]);
}

uint64_t TriangleMesh::content_hash() const {
  uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const void* data, size_t len) {
    const auto* p = (const unsigned char*)data;
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : positions) {
    double xyz[3] = {p.x(), p.y(), p.z()};
    feed(xyz, sizeof xyz);
  }
  for (const auto& f : faces) {
    int32_t ijk[3] = {f[0], f[1], f[2]};
    feed(ijk, sizeof ijk);
  }
  return h;
}

// --- io ---------------------------------------------------------------------

namespace {

// Whitespace tokenizer with '#' line comments.
std::vector<std::string> tokenize(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    std::istringstream ls(line);
    std::string t;
    while (ls >> t)
      tokens.push_back(t);
  }
  return tokens;
}

double parse_double(const std::string& s) {
  size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + s + "'");
  }
  if (pos != s.size())
    throw ParseError("expected a number, got '" + s + "'");
  return v;
}

long parse_long(const std::string& s) {
  size_t pos = 0;
  long v;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("expected an integer, got '" + s + "'");
  }
  if (pos != s.size())
    throw ParseError("expected an integer, got '" + s + "'");
  return v;
}

TriangleMesh parse_off(std::istream& in) {
  auto tok = tokenize(in);
  size_t i = 0;
  if (i < tok.size() && tok[i] == "OFF")
    ++i;
  if (tok.size() < i + 3)
    throw ParseError("OFF: missing counts");
  long nv = parse_long(tok[i]), nf = parse_long(tok[i + 1]);
  i += 3; // vertex, face, (ignored) edge counts
  if (nv < 0 || nf < 0 || tok.size() < i + 3 * (size_t)nv)
    throw ParseError("OFF: truncated vertex list");
  std::vector<Vec3> pos((size_t)nv);
  for (long v = 0; v < nv; ++v) {
    pos[v] = Vec3(parse_double(tok[i]), parse_double(tok[i + 1]),
                  parse_double(tok[i + 2]));
    i += 3;
  }
  std::vector<std::array<int, 3>> faces((size_t)nf);
  for (long f = 0; f < nf; ++f) {
    if (i >= tok.size())
      throw ParseError("OFF: truncated face list");
    long k = parse_long(tok[i++]);
    if (k != 3)
      throw ParseError("OFF: only triangles are supported");
    if (tok.size() < i + 3)
      throw ParseError("OFF: truncated face");
    for (int c = 0; c < 3; ++c)
      faces[f][c] = (int)parse_long(tok[i++]);
  }
  return TriangleMesh::build(std::move(pos), std::move(faces));
}

TriangleMesh parse_obj(std::istream& in) {
  std::vector<Vec3> pos;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  auto face_index = [&](const std::string& entry) {
    std::string head = entry.substr(0, entry.find('/'));
    long idx = parse_long(head);
    long resolved = idx > 0 ? idx - 1 : (long)pos.size() + idx;
    if (resolved < 0 || resolved >= (long)pos.size())
      throw ParseError("OBJ: face index " + head + " out of range");
    return (int)resolved;
  };
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key))
      continue;
    if (key == "v") {
      std::string x, y, z;
      if (!(ls >> x >> y >> z))
        throw ParseError("OBJ: malformed vertex line");
      pos.emplace_back(parse_double(x), parse_double(y), parse_double(z));
    } else if (key == "f") {
      std::vector<std::string> entries;
      std::string e;
      while (ls >> e)
        entries.push_back(e);
      if (entries.size() != 3)
        throw ParseError("OBJ: only triangle faces are supported");
      faces.push_back(
          {face_index(entries[0]), face_index(entries[1]), face_index(entries[2])});
    }
    // all other line kinds ignored
  }
  return TriangleMesh::build(std::move(pos), std::move(faces));
}

} // namespace

TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open mesh file: " + path);
  return format == MeshFormat::OFF ? parse_off(in) : parse_obj(in);
}

TriangleMesh load_mesh(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext)
    c = (char)std::tolower((unsigned char)c);
  if (ext == "off")
    return load_mesh(path, MeshFormat::OFF);
  if (ext == "obj")
    return load_mesh(path, MeshFormat::OBJ);
  throw ParseError("unknown mesh extension: " + path);
}

void save_off(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write: " + path);
  out << "OFF\n" << mesh.n_vertices() << ' ' << mesh.n_faces() << " 0\n";
  char buf[96];
  for (const auto& p : mesh.positions) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

void save_ply(const TriangleMesh& mesh, const std::string& path,
              const std::vector<std::array<uint8_t, 3>>& colors) {
  if ((int)colors.size() != mesh.n_vertices())
    throw ShapeMismatch("PLY color count does not match vertex count");
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.n_vertices() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.n_faces() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  char buf[120];
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const Vec3& p = mesh.positions[v];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %d %d %d\n", p.x(), p.y(),
                  p.z(), colors[v][0], colors[v][1], colors[v][2]);
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

std::vector<double> vertex_areas(const TriangleMesh& mesh) {
  std::vector<double> areas(mesh.n_vertices(), 0.0);
  for (int f = 0; f < mesh.n_faces(); ++f)
    for (int k = 0; k < 3; ++k)
      areas[mesh.faces[f][k]] += mesh.face_areas[f];
  return areas;
}

// --- simplification ----------------------------------------------------------

namespace {

using Quadric = Eigen::Matrix4d;

Quadric plane_quadric(const Vec3& n, double d) {
  Eigen::Vector4d p(n.x(), n.y(), n.z(), d);
  return p * p.transpose();
}

double quadric_cost(const Quadric& q, const Vec3& p) {
  Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
  return h.dot(q * h);
}

struct Collapse {
  double cost;
  double length;
  int keep, drop;
  uint64_t stamp; // version pair at enqueue time
  bool operator>(const Collapse& o) const {
    if (cost != o.cost)
      return cost > o.cost;
    if (length != o.length)
      return length > o.length;
    if (keep != o.keep)
      return keep > o.keep;
    return drop > o.drop;
  }
};

} // namespace

SimplificationMap simplify(const TriangleMesh& mesh, int target_vertex_count) {
  int nv = mesh.n_vertices();
  if (target_vertex_count < 4 || target_vertex_count > nv)
    throw ConfigInvalid("simplify target must be in [4, N_v]");
  // target == N_v runs zero collapses and yields the identity map

  // live connectivity, mutated in place
  std::vector<Vec3> pos = mesh.positions;
  std::vector<std::set<int>> nbrs(nv);
  std::vector<std::set<int>> vfaces(nv);
  std::vector<std::array<int, 3>> face(mesh.faces.begin(), mesh.faces.end());
  std::vector<bool> face_alive(mesh.n_faces(), true);
  std::vector<bool> vert_alive(nv, true);
  for (int f = 0; f < mesh.n_faces(); ++f)
    for (int k = 0; k < 3; ++k) {
      int a = face[f][k], b = face[f][(k + 1) % 3];
      nbrs[a].insert(b);
      nbrs[b].insert(a);
      vfaces[a].insert(f);
    }

  std::vector<Quadric> quad(nv, Quadric::Zero());
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& t = mesh.faces[f];
    Vec3 n = (pos[t[1]] - pos[t[0]]).cross(pos[t[2]] - pos[t[0]]);
    double area = 0.5 * n.norm();
    n.normalize();
    Quadric q = area * plane_quadric(n, -n.dot(pos[t[0]]));
    for (int k = 0; k < 3; ++k)
      quad[t[k]] += q;
  }
  // Boundary constraint planes keep collapses along open edges.
  const double boundary_weight = 100.0;
  for (const auto& [key, ef] : mesh.edge_faces) {
    if (ef.f1 >= 0)
      continue;
    int a = (int)(key & 0xffffffffu), b = (int)(key >> 32);
    const auto& t = mesh.faces[ef.f0];
    Vec3 fn = (pos[t[1]] - pos[t[0]]).cross(pos[t[2]] - pos[t[0]]).normalized();
    Vec3 edge = pos[b] - pos[a];
    Vec3 n = edge.cross(fn);
    double len = n.norm();
    if (len <= 0)
      continue;
    n /= len;
    Quadric q = boundary_weight * edge.norm() * plane_quadric(n, -n.dot(pos[a]));
    quad[a] += q;
    quad[b] += q;
  }

  std::vector<uint64_t> version(nv, 0);
  std::priority_queue<Collapse, std::vector<Collapse>, std::greater<Collapse>> heap;
  auto push_edge = [&](int a, int b) {
    // subset placement: the surviving endpoint is whichever is cheaper
    Quadric q = quad[a] + quad[b];
    double ca = quadric_cost(q, pos[a]), cb = quadric_cost(q, pos[b]);
    int keep = ca <= cb ? a : b;
    int drop = keep == a ? b : a;
    heap.push({std::min(ca, cb), (pos[a] - pos[b]).norm(), keep, drop,
               (version[a] << 32) ^ version[b]});
  };
  for (int a = 0; a < nv; ++a)
    for (int b : nbrs[a])
      if (a < b)
        push_edge(a, b);

  auto is_boundary_edge = [&](int a, int b) {
    int count = 0;
    for (int f : vfaces[a])
      if (face_alive[f] && vfaces[b].count(f))
        ++count;
    return count < 2;
  };
  auto vertex_on_boundary = [&](int v) {
    for (int u : nbrs[v])
      if (is_boundary_edge(v, u))
        return true;
    return false;
  };

  auto collapse_ok = [&](int keep, int drop) {
    // link condition: shared neighbors must be exactly the opposite
    // vertices of the faces along the collapsing edge
    std::set<int> shared;
    for (int u : nbrs[keep])
      if (nbrs[drop].count(u))
        shared.insert(u);
    std::set<int> wing;
    for (int f : vfaces[keep]) {
      if (!face_alive[f] || !vfaces[drop].count(f))
        continue;
      for (int k = 0; k < 3; ++k)
        if (face[f][k] != keep && face[f][k] != drop)
          wing.insert(face[f][k]);
    }
    if (wing.empty() || shared != wing)
      return false;
    // an interior edge between two boundary vertices would pinch the surface
    if (wing.size() == 2 && vertex_on_boundary(keep) && vertex_on_boundary(drop))
      return false;
    // reject collapses that flip or squash surviving faces around drop
    for (int f : vfaces[drop]) {
      if (!face_alive[f] || vfaces[keep].count(f))
        continue;
      Vec3 p[3], q[3];
      for (int k = 0; k < 3; ++k) {
        p[k] = pos[face[f][k]];
        q[k] = face[f][k] == drop ? pos[keep] : p[k];
      }
      Vec3 n0 = (p[1] - p[0]).cross(p[2] - p[0]);
      Vec3 n1 = (q[1] - q[0]).cross(q[2] - q[0]);
      if (n1.norm() <= 1e-14 || n0.dot(n1) <= 1e-12 * n0.norm() * n1.norm())
        return false;
      // a remapped face must not duplicate a surviving face (collapsing a
      // tetrahedral pocket would otherwise leave a two-face pillow)
      std::array<int, 3> vs;
      for (int k = 0; k < 3; ++k)
        vs[k] = face[f][k] == drop ? keep : face[f][k];
      std::sort(vs.begin(), vs.end());
      for (int f2 : vfaces[keep]) {
        if (!face_alive[f2] || vfaces[drop].count(f2))
          continue;
        std::array<int, 3> ws = face[f2];
        std::sort(ws.begin(), ws.end());
        if (ws == vs)
          return false;
      }
    }
    return true;
  };

  std::vector<int> parent(nv, -1);
  int alive = nv;
  while (alive > target_vertex_count && !heap.empty()) {
    Collapse c = heap.top();
    heap.pop();
    int a = c.keep, b = c.drop;
    if (!vert_alive[a] || !vert_alive[b] || !nbrs[a].count(b))
      continue;
    if (((version[a] << 32) ^ version[b]) != c.stamp)
      continue; // stale entry
    if (!collapse_ok(a, b))
      continue;

    // collapse b into a
    for (int f : std::vector<int>(vfaces[b].begin(), vfaces[b].end())) {
      if (!face_alive[f])
        continue;
      if (vfaces[a].count(f)) { // face along the edge dies
        face_alive[f] = false;
        for (int k = 0; k < 3; ++k)
          vfaces[face[f][k]].erase(f);
      } else {
        for (int k = 0; k < 3; ++k)
          if (face[f][k] == b)
            face[f][k] = a;
        vfaces[b].erase(f);
        vfaces[a].insert(f);
      }
    }
    for (int u : nbrs[b]) {
      nbrs[u].erase(b);
      if (u != a) {
        nbrs[u].insert(a);
        nbrs[a].insert(u);
      }
    }
    nbrs[a].erase(b);
    nbrs[b].clear();
    vert_alive[b] = false;
    parent[b] = a;
    quad[a] += quad[b];
    version[a]++;
    version[b]++;
    --alive;
    for (int u : nbrs[a])
      push_edge(a, u);
  }

  if (alive > target_vertex_count &&
      alive > (int)std::ceil(1.05 * target_vertex_count))
    throw TargetTooSmall("no manifold collapse sequence reaches target " +
                         std::to_string(target_vertex_count) + " (stopped at " +
                         std::to_string(alive) + ")");

  // compact the survivors
  std::vector<int> compact(nv, -1);
  std::vector<Vec3> cpos;
  cpos.reserve(alive);
  for (int v = 0; v < nv; ++v)
    if (vert_alive[v]) {
      compact[v] = (int)cpos.size();
      cpos.push_back(pos[v]);
    }
  std::vector<std::array<int, 3>> cfaces;
  for (int f = 0; f < mesh.n_faces(); ++f)
    if (face_alive[f])
      cfaces.push_back({compact[face[f][0]], compact[face[f][1]], compact[face[f][2]]});

  SimplificationMap map;
  map.coarse = TriangleMesh::build(std::move(cpos), std::move(cfaces));

  map.fine_to_coarse.resize(nv);
  for (int v = 0; v < nv; ++v) {
    int r = v;
    while (parent[r] >= 0)
      r = parent[r];
    map.fine_to_coarse[v] = compact[r];
  }

  map.coarse_to_fine.assign(map.coarse.n_vertices(), -1);
  std::vector<double> best(map.coarse.n_vertices(),
                           std::numeric_limits<double>::max());
  for (int v = 0; v < nv; ++v) {
    int u = map.fine_to_coarse[v];
    double d = (mesh.positions[v] - map.coarse.positions[u]).squaredNorm();
    if (d < best[u]) {
      best[u] = d;
      map.coarse_to_fine[u] = v;
    }
  }

  // angular offset: carry the fine reference direction into the coarse
  // tangent plane with the minimal normal-aligning rotation, then read its
  // angle in the coarse chart
  map.angle_offset.resize(nv);
  for (int v = 0; v < nv; ++v) {
    int u = map.fine_to_coarse[v];
    const OneRing& fr = mesh.ring(v);
    if (fr.neighbors.empty()) {
      map.angle_offset[v] = 0;
      continue;
    }
    const Vec3& nf = mesh.vertex_normals[v];
    const Vec3& nc = map.coarse.vertex_normals[u];
    Vec3 e = mesh.positions[fr.neighbors[0]] - mesh.positions[v];
    e -= nf * nf.dot(e);
    e.normalize();
    Vec3 axis = nf.cross(nc);
    double s = axis.norm(), c = nf.dot(nc);
    Vec3 rotated = e;
    if (s > 1e-14) {
      axis /= s;
      double ang = std::atan2(s, c);
      rotated = e * std::cos(ang) + axis.cross(e) * std::sin(ang) +
                axis * axis.dot(e) * (1 - std::cos(ang));
    }
    map.angle_offset[v] = chart_angle_of_direction(map.coarse, u, rotated);
  }
  return map;
}

} // namespace mdgc
