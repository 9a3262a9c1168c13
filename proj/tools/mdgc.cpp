// mdgc: precompute geodesic charts/windows, train and run directional
// convolution networks, audit precompute artifacts, and demo the
// direction-preserving transport.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "mdgc/angles.hpp"
#include "mdgc/container.hpp"
#include "mdgc/conv.hpp"
#include "mdgc/csv.hpp"
#include "mdgc/error.hpp"
#include "mdgc/mesh.hpp"
#include "mdgc/network.hpp"
#include "mdgc/parallel.hpp"

using nlohmann::json;

namespace {

using namespace mdgc;

ArchConfig read_arch(const std::string& path, const WindowSpec& spec) {
  ArchConfig cfg;
  cfg.n_rho = spec.n_rho;
  cfg.n_theta = spec.n_theta;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw IoError("cannot open architecture config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("architecture config: " + std::string(e.what()));
  }
  static const char* known[] = {"kind",       "model",  "width",   "stacks",
                                "blocks",     "n_classes", "activation",
                                "seed",       "n_rho",  "n_theta"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigInvalid("architecture config: unknown key '" + it.key() + "'");
  }
  try {
    cfg.kind = j.value("kind", cfg.kind);
    cfg.model = j.value("model", cfg.model);
    cfg.width = j.value("width", cfg.width);
    cfg.stacks = j.value("stacks", cfg.stacks);
    cfg.blocks = j.value("blocks", cfg.blocks);
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.activation = j.value("activation", cfg.activation);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.n_rho = j.value("n_rho", cfg.n_rho);
    cfg.n_theta = j.value("n_theta", cfg.n_theta);
  } catch (const json::exception& e) {
    throw ConfigInvalid("architecture config: " + std::string(e.what()));
  }
  if (cfg.n_rho != spec.n_rho || cfg.n_theta != spec.n_theta)
    throw ShapeMismatch("architecture bins " + std::to_string(cfg.n_rho) + "x" +
                        std::to_string(cfg.n_theta) +
                        " do not match the precompute container (" +
                        std::to_string(spec.n_rho) + "x" +
                        std::to_string(spec.n_theta) + ")");
  return cfg;
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

std::array<uint8_t, 3> heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return {(uint8_t)std::lround(255 * t), (uint8_t)std::lround(60 * (1 - t)),
          (uint8_t)std::lround(255 * (1 - t))};
}

// Distinct colors for class labels; wraps after 12.
std::array<uint8_t, 3> label_color(int label) {
  static const std::array<uint8_t, 3> palette[12] = {
      {230, 57, 70},   {29, 53, 87},   {42, 157, 143}, {244, 162, 97},
      {38, 70, 83},    {231, 111, 81}, {106, 76, 147}, {25, 130, 196},
      {138, 201, 38},  {255, 202, 58}, {255, 89, 94},  {22, 138, 173}};
  return palette[((label % 12) + 12) % 12];
}

void save_response_ply(const TriangleMesh& mesh, const std::vector<double>& resp,
                       const std::string& path) {
  double hi = 0;
  for (double x : resp) hi = std::max(hi, std::abs(x));
  if (hi == 0) hi = 1;
  std::vector<std::array<uint8_t, 3>> colors(resp.size());
  for (size_t v = 0; v < resp.size(); ++v) colors[v] = heat_color(std::abs(resp[v]) / hi);
  save_ply(mesh, path, colors);
}

int argmax_channel(const Signal& s, int row) {
  int best = 0;
  for (int c = 1; c < s.ch; ++c)
    if (s.at(row, c) > s.at(row, best)) best = c;
  return best;
}

int cmd_precompute(const std::string& mesh_path, const std::string& out_path,
                   double radius, int n_rho, int n_theta, int levels, double eps) {
  if (levels < 0) throw ConfigInvalid("precompute: levels must be non-negative");
  const TriangleMesh mesh = load_mesh(mesh_path);
  PrecomputeParams p;
  p.spec = {n_rho, n_theta, radius};
  p.r_max = 1.5 * radius; // slack so window points near the rim stay locatable
  p.eps = eps;
  p.radius_scale = 2.0; // coarser level = double the window radius
  int nv = mesh.n_vertices();
  for (int L = 0; L < levels; ++L) {
    nv /= 4;
    p.level_targets.push_back(nv);
  }
  const PrecomputeContainer c = precompute(mesh, p);
  save_container(c, out_path);
  std::cout << "precomputed " << c.levels.size() << " level(s) for "
            << mesh.n_vertices() << " vertices -> " << out_path << "\n";
  for (size_t L = 0; L < c.levels.size(); ++L)
    std::cout << "  level " << L << ": " << c.levels[L].mesh.n_vertices()
              << " vertices, window radius " << c.levels[L].windows.spec.radius
              << "\n";
  return 0;
}

int cmd_train(const std::string& pre_path, const std::string& data_path,
              const std::string& arch_path, const std::string& model_kind,
              const std::string& out_path, int epochs, int batch, double lr,
              std::uint64_t seed, const std::string& log_path, bool verbose) {
  const PrecomputeContainer c = load_container(pre_path);
  const NetContext ctx = make_context(c);
  const int nv = c.levels[0].mesh.n_vertices();
  const Dataset data = read_dataset_csv(data_path, nv);
  ArchConfig cfg = read_arch(arch_path, c.spec);
  if (!model_kind.empty()) cfg.model = model_kind;
  if (seed) cfg.seed = seed;
  Network net = build_network(data.xs[0].ch, cfg);
  net.check(ctx);

  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch = batch;
  tc.lr = lr;
  tc.seed = cfg.seed;
  tc.log_path = log_path.empty() ? out_path + ".log.csv" : log_path;
  tc.verbose = verbose;
  const TrainResult r = train(net, ctx, data, tc);
  save_network(net, out_path);
  std::cout << "trained " << cfg.model << " for " << r.epochs_run
            << " epoch(s): train_acc " << r.train_acc << " val_acc " << r.val_acc
            << " -> " << out_path << "\n";
  return 0;
}

// Per-vertex class scores: the features feeding the global average, pushed
// through the classification head row by row. Falls back to the network
// output when the graph has no global pooling.
Signal vertex_scores(const Network& net, const Workspace& ws) {
  int gavg = -1, head = -1;
  for (size_t i = 0; i < net.nodes.size(); ++i) {
    if (net.nodes[i].kind == OpKind::global_avg) gavg = (int)i;
    if (net.nodes[i].kind == OpKind::dense) head = net.nodes[i].param;
  }
  if (gavg < 0 || head < 0) return ws.vals.back().s;
  const Signal& f = ws.vals[net.nodes[gavg].in0].s;
  const DenseParams& p = net.dense[head];
  Signal out = Signal::zeros(f.nv, (int)p.weight.cols());
  for (int v = 0; v < f.nv; ++v)
    for (int q = 0; q < out.ch; ++q) {
      double z = p.bias(q);
      for (int c = 0; c < f.ch; ++c) z += f.at(v, c) * p.weight(c, q);
      out.at(v, q) = z;
    }
  return out;
}

int cmd_predict(const std::string& pre_path, const std::string& model_path,
                const std::string& signal_path, const std::string& out_path,
                const std::string& data_path, int split) {
  const PrecomputeContainer c = load_container(pre_path);
  const NetContext ctx = make_context(c);
  const Network net = load_network(model_path);
  net.check(ctx);

  if (!signal_path.empty()) {
    const Signal x = read_signal_csv(signal_path);
    Workspace ws;
    const Signal logits = net.forward(x, ctx, &ws);
    if (logits.nv == 1) {
      const Signal probs = softmax_rows(logits);
      const int cls = argmax_channel(probs, 0);
      std::cout << "predicted class " << cls << " (p = " << probs.at(0, cls) << ")\n";
    } else {
      std::cout << "per-vertex prediction over " << logits.nv << " vertices\n";
    }

    if (!out_path.empty()) {
      const Signal vprobs = softmax_rows(vertex_scores(net, ws));
      if (ends_with(out_path, ".ply")) {
        std::vector<std::array<uint8_t, 3>> colors(vprobs.nv);
        for (int v = 0; v < vprobs.nv; ++v)
          colors[v] = label_color(argmax_channel(vprobs, v));
        save_ply(c.levels[0].mesh, out_path, colors);
      } else {
        std::ofstream f(out_path);
        if (!f) throw IoError("cannot open '" + out_path + "' for writing");
        char buf[32];
        for (int v = 0; v < vprobs.nv; ++v) {
          f << argmax_channel(vprobs, v);
          for (int q = 0; q < vprobs.ch; ++q) {
            std::snprintf(buf, sizeof buf, "%.17g", vprobs.at(v, q));
            f << ',' << buf;
          }
          f << '\n';
        }
        if (!f) throw IoError("failed writing '" + out_path + "'");
      }
      std::cout << "wrote per-vertex labels -> " << out_path << "\n";
    }
    return 0;
  }
  if (data_path.empty()) throw ConfigInvalid("predict: need --signal or --data");
  const Dataset data = read_dataset_csv(data_path, c.levels[0].mesh.n_vertices(),
                                        net.in_ch);
  double loss = 0;
  const double acc = evaluate(net, ctx, data, split, &loss);
  std::cout << "split " << split << ": accuracy " << acc << " loss " << loss << "\n";
  return 0;
}

// Pushes a one-vertex impulse through n rounds of convolution with a one-hot
// polar kernel. Directional convolution keeps a coherent front that marches
// outward; rotation-max convolution smears the energy into a filled disc.
int cmd_demo(const std::string& pre_path, const std::string& out_path, double t,
             int n, const std::string& mode, int source) {
  if (mode != "dir" && mode != "geo")
    throw ConfigInvalid("demo-dirac: mode must be 'dir' or 'geo'");
  if (n < 1) throw ConfigInvalid("demo-dirac: need at least one application");
  const PrecomputeContainer c = load_container(pre_path);
  const TriangleMesh& mesh = c.levels[0].mesh;
  const WindowTensors& tensors = c.levels[0].windows;
  const WindowSpec& spec = tensors.spec;
  if (source < 0 || source >= mesh.n_vertices())
    throw SourceOutOfRange("demo-dirac: source vertex out of range");

  int bin = 0;
  for (int i = 1; i < spec.n_rho; ++i)
    if (std::abs(spec.rho(i) - t) < std::abs(spec.rho(bin) - t)) bin = i;
  const double step = spec.rho(bin);

  PolarKernel K = PolarKernel::zeros(spec.n_rho, spec.n_theta, 1, 1);
  K.at(bin, 0, 0, 0) = 1.0;
  Signal dirac = Signal::zeros(mesh.n_vertices(), 1);
  dirac.at(source, 0) = 1.0;

  Signal resp;
  if (mode == "dir") {
    DirectionalSignal phi = lift(dirac, spec.n_theta);
    for (int k = 0; k < n; ++k) phi = dir_conv(phi, K, tensors);
    resp = angular_max_pool(phi);
  } else {
    resp = dirac;
    for (int k = 0; k < n; ++k) resp = geodesic_conv(resp, K, tensors);
  }

  const std::string stem =
      ends_with(out_path, ".ply") ? out_path.substr(0, out_path.size() - 4) : out_path;
  std::vector<double> vals(mesh.n_vertices());
  for (int v = 0; v < mesh.n_vertices(); ++v) vals[v] = std::abs(resp.at(v, 0));
  save_response_ply(mesh, vals, stem + ".ply");

  // response-versus-distance profile around the impulse
  const GpcMap far = compute_gpc(mesh, source, (n + 1.0) * spec.radius);
  std::ofstream csv(stem + "_profile.csv");
  if (!csv) throw IoError("cannot open '" + stem + "_profile.csv' for writing");
  csv << "vertex,geodesic_r,response\n";
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!far.reached(v)) continue;
    csv << v << ',' << far.r[v] << ',' << vals[v] << '\n';
  }

  const double target = n * step;
  const double halfw = spec.radius / (spec.n_rho + 1); // one radial bin
  const std::vector<double> areas = vertex_areas(mesh);
  double mass = 0, near = 0;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!far.reached(v)) continue;
    mass += areas[v] * vals[v];
    if (std::abs(far.r[v] - target) <= halfw) near += areas[v] * vals[v];
  }
  std::cout << "kernel step " << step << " (radial bin " << bin << "), " << n
            << " application(s), front expected at r = " << target << "\n";
  std::cout << "  " << (mode == "dir" ? "directional" : "rotation-max") << ": "
            << (mass > 0 ? near / mass : 0)
            << " of |response| mass within one bin of the front\n";
  std::cout << "wrote " << stem << ".ply, " << stem << "_profile.csv\n";
  return 0;
}

struct Audit {
  std::string name;
  bool pass = false;
  std::string detail;
};

PolarKernel random_kernel(std::mt19937_64& rng, const WindowSpec& spec, int cin,
                          int cout) {
  PolarKernel K = PolarKernel::zeros(spec.n_rho, spec.n_theta, cin, cout);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& x : K.a) x = dist(rng);
  return K;
}

Signal random_signal(std::mt19937_64& rng, int nv, int ch) {
  Signal f = Signal::zeros(nv, ch);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& x : f.a) x = dist(rng);
  return f;
}

int cmd_verify(const std::string& pre_path, const std::string& mesh_path) {
  const PrecomputeContainer c = load_container(pre_path);
  std::vector<Audit> audits;

  // structural integrity of every level
  {
    std::vector<std::string> problems = verify_container(c);
    if (!mesh_path.empty()) {
      const TriangleMesh m = load_mesh(mesh_path);
      if (m.content_hash() != c.mesh_hash)
        problems.push_back("container was not built from '" + mesh_path + "'");
    }
    std::string detail;
    if (!problems.empty()) {
      detail = problems.front();
      if (problems.size() > 1)
        detail += " (+" + std::to_string(problems.size() - 1) + " more)";
    }
    audits.push_back({"container integrity", problems.empty(), detail});
  }

  // every valid window point must reconstruct its own polar position from
  // its supporting vertices' chart coordinates and weights
  {
    double worst = 0;
    bool coherent = true;
    std::string detail;
    for (size_t L = 0; L < c.levels.size() && coherent; ++L) {
      const auto& lev = c.levels[L];
      const WindowTensors& w = lev.windows;
      const double tol_scale = std::max(1.0, w.spec.radius);
      for (int v = 0; v < w.nv && coherent; ++v) {
        const GpcMap& g = lev.gpcs[v];
        for (int i = 0; i < w.spec.n_rho && coherent; ++i)
          for (int j = 0; j < w.spec.n_theta && coherent; ++j) {
            if (!w.valid[w.point_index(v, i, j)]) continue;
            const double qx = w.spec.rho(i) * std::cos(w.spec.theta(j));
            const double qy = w.spec.rho(i) * std::sin(w.spec.theta(j));
            double rx = 0, ry = 0;
            for (int m = 0; m < 3; ++m) {
              const size_t s = w.support_index(v, i, j, m);
              const int e = w.E[s];
              if (!g.reached(e)) {
                coherent = false;
                detail = "level " + std::to_string(L) + ": support vertex outside chart";
                break;
              }
              rx += w.W[s] * g.r[e] * std::cos(g.theta[e]);
              ry += w.W[s] * g.r[e] * std::sin(g.theta[e]);
            }
            worst = std::max(worst, std::hypot(rx - qx, ry - qy) / tol_scale);
          }
      }
    }
    const bool pass = coherent && worst <= 1e-9;
    if (coherent) detail = "max error " + std::to_string(worst);
    audits.push_back({"barycentric reconstruction", pass, detail});
  }

  const auto& lev0 = c.levels[0];
  const WindowTensors& w0 = lev0.windows;
  const int nv0 = w0.nv, nth0 = w0.spec.n_theta;
  std::mt19937_64 rng(20240501);

  // rotation-max convolution must equal directional convolution of the
  // lifted signal followed by the angular max
  {
    const Signal f = random_signal(rng, nv0, 2);
    const PolarKernel K = random_kernel(rng, w0.spec, 2, 3);
    const Signal geo = geodesic_conv(f, K, w0);
    const Signal dir = angular_max_pool(dir_conv(lift(f, nth0), K, w0));
    double worst = 0;
    for (size_t k = 0; k < geo.a.size(); ++k)
      worst = std::max(worst, std::abs(geo.a[k] - dir.a[k]));
    audits.push_back({"directional/rotation-max agreement", worst <= 1e-10,
                      "max difference " + std::to_string(worst)});
  }

  // rotating one vertex's reference direction must permute that vertex's
  // output bins and leave every other vertex untouched (two stacked layers)
  {
    const Signal f = random_signal(rng, nv0, 1);
    const PolarKernel K1 = random_kernel(rng, w0.spec, 1, 2);
    const PolarKernel K2 = random_kernel(rng, w0.spec, 2, 2);
    const int v = (int)(rng() % (std::uint64_t)nv0);
    const int k = 1 + (int)(rng() % (std::uint64_t)(nth0 - 1));
    const WindowTensors wrot = rotate_reference(w0, v, k);
    const DirectionalSignal out = dir_conv(dir_conv(lift(f, nth0), K1, w0), K2, w0);
    const DirectionalSignal outr =
        dir_conv(dir_conv(lift(f, nth0), K1, wrot), K2, wrot);
    double worst = 0;
    for (int u = 0; u < nv0; ++u)
      for (int b = 0; b < nth0; ++b)
        for (int q = 0; q < out.ch; ++q) {
          const int bref = u == v ? (b + k) % nth0 : b;
          worst = std::max(worst, std::abs(outr.at(u, b, q) - out.at(u, bref, q)));
        }
    audits.push_back({"reference rotation equivariance", worst <= 1e-6,
                      "vertex " + std::to_string(v) + " by " + std::to_string(k) +
                          " bins, max difference " + std::to_string(worst)});
  }

  // transporting a direction out and back must compose to the identity
  {
    double sum = 0;
    long count = 0;
    const int stride = std::max(1, nv0 / 64);
    for (int s = 0; s < nv0 && count < 2000; s += stride) {
      const GpcMap& gs = lev0.gpcs[s];
      for (int v = 0; v < nv0 && count < 2000; ++v) {
        if (v == s || !gs.reached(v) || !(gs.r[v] > 0)) continue;
        const GpcMap& gv = lev0.gpcs[v];
        if (!gv.reached(s)) continue;
        sum += std::abs(wrap_pm_pi(gs.gamma[v] + gv.gamma[s]));
        ++count;
      }
    }
    const double mean = count ? sum / count : 0;
    audits.push_back({"transport round trip", mean <= 0.15,
                      "mean residual " + std::to_string(mean) + " rad over " +
                          std::to_string(count) + " pairs"});
  }

  // analytic gradients of a small network against central differences
  {
    NetContext ctx = make_context(c);
    ArchConfig acfg;
    acfg.kind = "resnet";
    acfg.n_rho = w0.spec.n_rho;
    acfg.n_theta = nth0;
    acfg.width = 2;
    acfg.stacks = 1;
    acfg.blocks = 1;
    acfg.n_classes = 2;
    acfg.activation = "tanh";
    acfg.seed = 7;
    Network net = build_network(1, acfg);
    net.check(ctx);
    const Signal x = random_signal(rng, nv0, 1);
    const std::vector<int> label = {0};

    auto loss_fn = [&]() {
      Workspace ws;
      return cross_entropy(net.forward(x, ctx, &ws), label);
    };
    Workspace ws;
    Signal dl;
    cross_entropy(net.forward(x, ctx, &ws), label, &dl);
    Grads grads = net.make_grads();
    net.backward(dl, ctx, ws, &grads);

    // a handful of parameters spread over every tensor kind
    std::vector<std::pair<double*, double>> picks;
    auto pick = [&](double* p, double analytic) { picks.push_back({p, analytic}); };
    LayerParams& l0 = net.conv[0];
    const size_t ki = rng() % l0.kernel.a.size();
    pick(&l0.kernel.a[ki], grads.conv[0].kernel.a[ki]);
    pick(&l0.central(0, 0), grads.conv[0].central(0, 0));
    pick(&l0.bias(0), grads.conv[0].bias(0));
    const size_t k1 = rng() % net.conv[1].kernel.a.size();
    pick(&net.conv[1].kernel.a[k1], grads.conv[1].kernel.a[k1]);
    pick(&net.dense[0].weight(0, 0), grads.dense[0].weight(0, 0));
    pick(&net.dense[0].bias(1), grads.dense[0].bias(1));
    double worst = 0;
    const double h = 1e-5;
    for (auto& [p, analytic] : picks) {
      const double keep = *p;
      *p = keep + h;
      const double up = loss_fn();
      *p = keep - h;
      const double dn = loss_fn();
      *p = keep;
      const double fd = (up - dn) / (2 * h);
      const double rel = std::abs(fd - analytic) / std::max(1e-8, std::abs(fd) + std::abs(analytic));
      worst = std::max(worst, rel);
    }
    audits.push_back({"gradient spot check", worst <= 1e-4,
                      "max relative error " + std::to_string(worst)});
  }

  bool all = true;
  for (const auto& a : audits) {
    all = all && a.pass;
    std::cout << a.name << ": " << (a.pass ? "pass" : "FAIL");
    if (!a.detail.empty()) std::cout << " (" << a.detail << ")";
    std::cout << "\n";
  }

  // informational planar-oracle report when the base mesh is flat
  {
    const TriangleMesh& m = lev0.mesh;
    Vec3 n = Vec3::Zero();
    for (int f = 0; f < m.n_faces(); ++f) {
      const auto& fc = m.faces[f];
      n += (m.positions[fc[1]] - m.positions[fc[0]])
               .cross(m.positions[fc[2]] - m.positions[fc[0]]);
    }
    if (n.norm() > 0) {
      n.normalize();
      double span = 0, dev = 0;
      for (const auto& p : m.positions) {
        span = std::max(span, (p - m.positions[0]).norm());
        dev = std::max(dev, std::abs(n.dot(p - m.positions[0])));
      }
      if (span > 0 && dev <= 1e-9 * span) {
        double err = 0;
        long count = 0;
        const int stride = std::max(1, nv0 / 32);
        for (int s = 0; s < nv0; s += stride) {
          const GpcMap& g = lev0.gpcs[s];
          for (int v = 0; v < nv0; ++v) {
            if (v == s || !g.reached(v)) continue;
            const double d = (m.positions[v] - m.positions[s]).norm();
            if (d > 0) {
              err += std::abs(g.r[v] - d) / d;
              ++count;
            }
          }
        }
        if (count)
          std::cout << "planar mesh: mean radius error vs straight-line distance "
                    << err / count << " over " << count << " pairs\n";
      }
    }
  }

  return all ? 0 : 5;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-directional geodesic convolution on triangle meshes"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (0 = hardware)")
      ->capture_default_str();

  // precompute
  auto* pre = app.add_subcommand("precompute", "build charts, windows, and levels");
  std::string pre_mesh, pre_out;
  double pre_radius = 0, pre_eps = 1e-12;
  int pre_nrho = 2, pre_ntheta = 8, pre_levels = 0;
  pre->add_option("--mesh", pre_mesh, "input mesh (.off/.obj)")->required();
  pre->add_option("--out", pre_out, "output container")->required();
  pre->add_option("--radius", pre_radius, "window radius")->required();
  pre->add_option("--nrho", pre_nrho, "radial bins")->capture_default_str();
  pre->add_option("--ntheta", pre_ntheta, "angular bins")->capture_default_str();
  pre->add_option("--levels", pre_levels,
                  "extra coarser levels; each is 4x fewer vertices, 2x the radius")
      ->capture_default_str();
  pre->add_option("--eps", pre_eps, "fast-marching improvement tolerance")
      ->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train a classifier on precomputed windows");
  std::string tr_pre, tr_data, tr_arch, tr_model, tr_out = "model.bin", tr_log;
  int tr_epochs = 30, tr_batch = 10;
  double tr_lr = 0.001;
  std::uint64_t tr_seed = 0;
  bool tr_verbose = false;
  tr->add_option("--pre", tr_pre, "precompute container")->required();
  tr->add_option("--data", tr_data, "dataset CSV: split,label,values...")->required();
  tr->add_option("--arch", tr_arch, "architecture config JSON");
  tr->add_option("--model", tr_model, "mdgcnn (directional) or gcnn (rotation-max)")
      ->check(CLI::IsMember({"mdgcnn", "gcnn"}));
  tr->add_option("--out", tr_out, "output model file")->capture_default_str();
  tr->add_option("--epochs", tr_epochs, "training epochs")->capture_default_str();
  tr->add_option("--batch", tr_batch, "mini-batch size")->capture_default_str();
  tr->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
  tr->add_option("--seed", tr_seed, "override init/shuffle seed (0 = from arch)");
  tr->add_option("--log", tr_log, "per-epoch metrics CSV (default <out>.log.csv)");
  tr->add_flag("--verbose", tr_verbose, "print per-epoch metrics");

  // predict
  auto* pr = app.add_subcommand("predict", "run a trained model");
  std::string pr_pre, pr_model, pr_signal, pr_out, pr_data;
  int pr_split = 1;
  pr->add_option("--pre", pr_pre, "precompute container")->required();
  pr->add_option("--model", pr_model, "trained model file")->required();
  pr->add_option("--signal", pr_signal, "input signal CSV (one vertex per row)");
  pr->add_option("--out", pr_out, "per-vertex labels: .ply (colored) or CSV");
  pr->add_option("--data", pr_data, "dataset CSV to evaluate instead of --signal");
  pr->add_option("--split", pr_split, "dataset split flag to evaluate")
      ->capture_default_str();

  // demo-dirac
  auto* dm = app.add_subcommand(
      "demo-dirac", "impulse-response demo: directional vs rotation-max transport");
  std::string dm_pre, dm_out = "demo", dm_mode = "dir";
  double dm_t = 0;
  int dm_source = 0, dm_n = 3;
  dm->add_option("--pre", dm_pre, "precompute container")->required();
  dm->add_option("--t", dm_t, "kernel step length (snapped to a radial bin)")
      ->required();
  dm->add_option("--n", dm_n, "convolution rounds")->capture_default_str();
  dm->add_option("--mode", dm_mode, "dir (directional) or geo (rotation-max)")
      ->check(CLI::IsMember({"dir", "geo"}))
      ->capture_default_str();
  dm->add_option("--source", dm_source, "impulse vertex")->capture_default_str();
  dm->add_option("--out", dm_out, "output stem or .ply path")->capture_default_str();

  // verify
  auto* vf = app.add_subcommand("verify", "audit a precompute container");
  std::string vf_pre, vf_mesh;
  vf->add_option("--pre", vf_pre, "precompute container")->required();
  vf->add_option("--mesh", vf_mesh, "check the container matches this mesh");

  CLI11_PARSE(app, argc, argv);
  mdgc::set_num_threads(threads);

  try {
    if (pre->parsed())
      return cmd_precompute(pre_mesh, pre_out, pre_radius, pre_nrho, pre_ntheta,
                            pre_levels, pre_eps);
    if (tr->parsed())
      return cmd_train(tr_pre, tr_data, tr_arch, tr_model, tr_out, tr_epochs,
                       tr_batch, tr_lr, tr_seed, tr_log, tr_verbose);
    if (pr->parsed())
      return cmd_predict(pr_pre, pr_model, pr_signal, pr_out, pr_data, pr_split);
    if (dm->parsed())
      return cmd_demo(dm_pre, dm_out, dm_t, dm_n, dm_mode, dm_source);
    if (vf->parsed()) return cmd_verify(vf_pre, vf_mesh);
  } catch (const mdgc::TooManyInvalid& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mdgc::MeshError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdgc::ShapeMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const mdgc::ConfigInvalid& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const mdgc::SourceOutOfRange& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
