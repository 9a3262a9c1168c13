#include "mdgc/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "mdgc/angles.hpp"
#include "mdgc/error.hpp"
#include "mdgc/parallel.hpp"

namespace mdgc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<const RowMat>;
using MapRowMut = Eigen::Map<RowMat>;

RowMat rotated_kernel(const PolarKernel& K, int l) {
  const int nr = K.n_rho, nth = K.n_theta, cin = K.in_ch, cout = K.out_ch;
  RowMat rot(nr * nth * cin, cout);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nth; ++j) {
      const int js = ((j - l) % nth + nth) % nth;
      for (int p = 0; p < cin; ++p)
        for (int q = 0; q < cout; ++q)
          rot((i * nth + j) * cin + p, q) = K.at(i, js, p, q);
    }
  return rot;
}

Value zeros_like(const Value& v) {
  Value z;
  z.is_dir = v.is_dir;
  if (v.is_dir)
    z.d = DirectionalSignal::zeros(v.d.nv, v.d.nth, v.d.ch);
  else
    z.s = Signal::zeros(v.s.nv, v.s.ch);
  return z;
}

const WindowTensors& level_tensors(const NetContext& ctx, int level, const char* what) {
  if (level < 0 || level >= (int)ctx.levels.size() || !ctx.levels[level].tensors)
    throw MissingContext(std::string(what) + ": no window tensors for level " +
                         std::to_string(level));
  return *ctx.levels[level].tensors;
}

const SimplificationMap& level_map(const NetContext& ctx, int level, const char* what) {
  if (level < 0 || level >= (int)ctx.maps.size() || !ctx.maps[level])
    throw MissingContext(std::string(what) + ": no simplification map for level " +
                         std::to_string(level));
  return *ctx.maps[level];
}

// Fine-chart bin coordinate of coarse bin b, using the coarse-chart angle
// offset of the surviving vertex. Returns floor bin, ceil bin, and fraction.
void pool_coord(double bin, int nth_from, int* g0, int* g1, double* t) {
  double g = std::fmod(bin, (double)nth_from);
  if (g < 0) g += nth_from;
  int f = (int)g;
  if (f >= nth_from) f = nth_from - 1;
  *g0 = f;
  *g1 = f + 1 == nth_from ? 0 : f + 1;
  *t = g - f;
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh_fn;
  if (s == "identity") return Activation::identity;
  throw ConfigInvalid("unknown activation '" + s + "'");
}

} // namespace

void Grads::zero() {
  for (auto& p : conv) {
    std::fill(p.kernel.a.begin(), p.kernel.a.end(), 0.0);
    p.central.setZero();
    p.bias.setZero();
  }
  for (auto& p : dense) {
    p.weight.setZero();
    p.bias.setZero();
  }
}

void Grads::add(const Grads& other) {
  for (size_t k = 0; k < conv.size(); ++k) {
    auto& a = conv[k];
    const auto& b = other.conv[k];
    for (size_t i = 0; i < a.kernel.a.size(); ++i) a.kernel.a[i] += b.kernel.a[i];
    a.central += b.central;
    a.bias += b.bias;
  }
  for (size_t k = 0; k < dense.size(); ++k) {
    dense[k].weight += other.dense[k].weight;
    dense[k].bias += other.dense[k].bias;
  }
}

Grads Network::make_grads() const {
  Grads g;
  g.conv.reserve(conv.size());
  for (const auto& p : conv) {
    LayerParams z;
    z.kernel = PolarKernel::zeros(p.kernel.n_rho, p.kernel.n_theta, p.kernel.in_ch,
                                  p.kernel.out_ch);
    z.central = Eigen::MatrixXd::Zero(p.central.rows(), p.central.cols());
    z.bias = Eigen::VectorXd::Zero(p.bias.size());
    z.act = p.act;
    g.conv.push_back(std::move(z));
  }
  g.dense.reserve(dense.size());
  for (const auto& p : dense)
    g.dense.push_back({Eigen::MatrixXd::Zero(p.weight.rows(), p.weight.cols()),
                       Eigen::VectorXd::Zero(p.bias.size())});
  return g;
}

void Network::check(const NetContext& ctx) const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    switch (n.kind) {
      case OpKind::lift:
      case OpKind::dir_layer:
      case OpKind::gc_layer:
        (void)level_tensors(ctx, n.level, "network check");
        break;
      case OpKind::pool:
      case OpKind::unpool: {
        const SimplificationMap& m = level_map(ctx, n.level, "network check");
        (void)level_tensors(ctx, n.level, "network check");
        (void)level_tensors(ctx, n.level + 1, "network check");
        if ((int)m.fine_to_coarse.size() !=
            ctx.levels[n.level].tensors->nv)
          throw MissingContext("network check: simplification map does not match level " +
                               std::to_string(n.level));
        break;
      }
      case OpKind::global_avg:
        if (n.level >= (int)ctx.levels.size() ||
            ctx.levels[n.level].areas.empty())
          throw MissingContext("network check: no vertex areas for level " +
                               std::to_string(n.level));
        break;
      default: break;
    }
    if (n.param >= 0) {
      if (n.kind == OpKind::dir_layer || n.kind == OpKind::gc_layer) {
        const PolarKernel& K = conv[n.param].kernel;
        const WindowSpec& spec = level_tensors(ctx, n.level, "network check").spec;
        if (K.n_rho != spec.n_rho || K.n_theta != spec.n_theta)
          throw ShapeMismatch("network check: kernel bins do not match level " +
                              std::to_string(n.level) + " windows");
      }
    }
  }
}

Signal Network::forward(const Signal& input, const NetContext& ctx,
                        Workspace* ws) const {
  if (nodes.empty() || nodes[0].kind != OpKind::input)
    throw ConfigInvalid("network has no input node");
  if (input.ch != in_ch)
    throw ShapeMismatch("forward: input has " + std::to_string(input.ch) +
                        " channels, network expects " + std::to_string(in_ch));
  if (ctx.levels.empty() || input.nv != ctx.levels[0].tensors->nv)
    throw ShapeMismatch("forward: input vertex count does not match level 0");
  ws->vals.assign(nodes.size(), Value{});
  ws->pre.assign(nodes.size(), {});
  ws->argmax.assign(nodes.size(), {});

  for (size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    Value& out = ws->vals[i];
    switch (n.kind) {
      case OpKind::input:
        out.is_dir = false;
        out.s = input;
        break;

      case OpKind::lift: {
        const WindowTensors& t = level_tensors(ctx, n.level, "lift");
        out.is_dir = true;
        out.d = lift(ws->vals[n.in0].s, t.spec.n_theta);
        break;
      }

      case OpKind::dir_layer: {
        const WindowTensors& t = level_tensors(ctx, n.level, "dir_layer");
        const LayerParams& p = conv[n.param];
        const DirectionalSignal& phi = ws->vals[n.in0].d;
        DirectionalSignal z = dir_conv(phi, p.kernel, t);
        const int nth = z.nth, cout = z.ch;
        for (int v = 0; v < z.nv; ++v)
          for (int l = 0; l < nth; ++l) {
            Eigen::Map<const Eigen::VectorXd> x(&phi.a[((size_t)v * nth + l) * phi.ch],
                                                phi.ch);
            const Eigen::VectorXd cen = p.central.transpose() * x + p.bias;
            for (int q = 0; q < cout; ++q) z.at(v, l, q) += cen(q);
          }
        ws->pre[i] = z.a;
        for (double& x : z.a) x = apply_activation(p.act, x);
        out.is_dir = true;
        out.d = std::move(z);
        break;
      }

      case OpKind::gc_layer: {
        const WindowTensors& t = level_tensors(ctx, n.level, "gc_layer");
        const LayerParams& p = conv[n.param];
        const Signal& f = ws->vals[n.in0].s;
        const WindowValues pb = pull_back(f, t);
        const int nv = t.nv, nth = t.spec.n_theta, cout = p.kernel.out_ch;
        MapRow PB(pb.a.data(), nv, (Eigen::Index)t.spec.n_rho * nth * f.ch);
        MapRow F(f.a.data(), nv, f.ch);
        const RowMat cen = (F * p.central).rowwise() + p.bias.transpose();
        std::vector<double> best((size_t)nv * cout,
                                 -std::numeric_limits<double>::infinity());
        ws->pre[i].assign((size_t)nv * cout, 0.0);
        ws->argmax[i].assign((size_t)nv * cout, 0);
        for (int l = 0; l < nth; ++l) {
          const RowMat R = PB * rotated_kernel(p.kernel, l);
          for (int v = 0; v < nv; ++v)
            for (int q = 0; q < cout; ++q) {
              const double z = R(v, q) + cen(v, q);
              const double y = apply_activation(p.act, z);
              double& b = best[(size_t)v * cout + q];
              if (y > b) {
                b = y;
                ws->pre[i][(size_t)v * cout + q] = z;
                ws->argmax[i][(size_t)v * cout + q] = l;
              }
            }
        }
        out.is_dir = false;
        out.s = Signal::zeros(nv, cout);
        out.s.a.assign(best.begin(), best.end());
        break;
      }

      case OpKind::amp: {
        std::vector<int> arg;
        out.is_dir = false;
        out.s = angular_max_pool(ws->vals[n.in0].d, &arg);
        ws->argmax[i] = std::move(arg);
        break;
      }

      case OpKind::pool: {
        const SimplificationMap& m = level_map(ctx, n.level, "pool");
        const Value& in = ws->vals[n.in0];
        const int nvc = (int)m.coarse_to_fine.size();
        if (in.is_dir) {
          const int nthf = in.d.nth;
          const int nthc = level_tensors(ctx, n.level + 1, "pool").spec.n_theta;
          const int ch = in.d.ch;
          out.is_dir = true;
          out.d = DirectionalSignal::zeros(nvc, nthc, ch);
          for (int u = 0; u < nvc; ++u) {
            const int fv = m.coarse_to_fine[u];
            const double off = m.angle_offset[fv] * nthf / two_pi;
            for (int b = 0; b < nthc; ++b) {
              int g0, g1;
              double t;
              pool_coord((double)b * nthf / nthc - off, nthf, &g0, &g1, &t);
              for (int c = 0; c < ch; ++c)
                out.d.at(u, b, c) =
                    (1.0 - t) * in.d.at(fv, g0, c) + t * in.d.at(fv, g1, c);
            }
          }
        } else {
          out.is_dir = false;
          out.s = Signal::zeros(nvc, in.s.ch);
          for (int u = 0; u < nvc; ++u)
            for (int c = 0; c < in.s.ch; ++c)
              out.s.at(u, c) = in.s.at(m.coarse_to_fine[u], c);
        }
        break;
      }

      case OpKind::unpool: {
        const SimplificationMap& m = level_map(ctx, n.level, "unpool");
        const Value& in = ws->vals[n.in0];
        const int nvf = (int)m.fine_to_coarse.size();
        if (in.is_dir) {
          const int nthc = in.d.nth;
          const int nthf = level_tensors(ctx, n.level, "unpool").spec.n_theta;
          const int ch = in.d.ch;
          out.is_dir = true;
          out.d = DirectionalSignal::zeros(nvf, nthf, ch);
          for (int v = 0; v < nvf; ++v) {
            const int u = m.fine_to_coarse[v];
            const double off = m.angle_offset[v] * nthc / two_pi;
            for (int a = 0; a < nthf; ++a) {
              int g0, g1;
              double t;
              pool_coord((double)a * nthc / nthf + off, nthc, &g0, &g1, &t);
              for (int c = 0; c < ch; ++c)
                out.d.at(v, a, c) =
                    (1.0 - t) * in.d.at(u, g0, c) + t * in.d.at(u, g1, c);
            }
          }
        } else {
          out.is_dir = false;
          out.s = Signal::zeros(nvf, in.s.ch);
          for (int v = 0; v < nvf; ++v)
            for (int c = 0; c < in.s.ch; ++c)
              out.s.at(v, c) = in.s.at(m.fine_to_coarse[v], c);
        }
        break;
      }

      case OpKind::res_add: {
        const Value& a = ws->vals[n.in0];
        const Value& b = ws->vals[n.in1];
        if (a.is_dir != b.is_dir)
          throw ShapeMismatch("res_add: mixed signal kinds");
        out = a;
        if (a.is_dir) {
          if (a.d.nv != b.d.nv || a.d.nth != b.d.nth || a.d.ch != b.d.ch)
            throw ShapeMismatch("res_add: directional shape mismatch");
          for (size_t k = 0; k < out.d.a.size(); ++k) out.d.a[k] += b.d.a[k];
        } else {
          if (a.s.nv != b.s.nv || a.s.ch != b.s.ch)
            throw ShapeMismatch("res_add: signal shape mismatch");
          for (size_t k = 0; k < out.s.a.size(); ++k) out.s.a[k] += b.s.a[k];
        }
        break;
      }

      case OpKind::concat: {
        const Value& a = ws->vals[n.in0];
        const Value& b = ws->vals[n.in1];
        if (a.is_dir != b.is_dir)
          throw ShapeMismatch("concat: mixed signal kinds");
        if (a.is_dir) {
          if (a.d.nv != b.d.nv || a.d.nth != b.d.nth)
            throw ShapeMismatch("concat: directional shape mismatch");
          out.is_dir = true;
          out.d = DirectionalSignal::zeros(a.d.nv, a.d.nth, a.d.ch + b.d.ch);
          for (int v = 0; v < a.d.nv; ++v)
            for (int j = 0; j < a.d.nth; ++j) {
              for (int c = 0; c < a.d.ch; ++c) out.d.at(v, j, c) = a.d.at(v, j, c);
              for (int c = 0; c < b.d.ch; ++c)
                out.d.at(v, j, a.d.ch + c) = b.d.at(v, j, c);
            }
        } else {
          if (a.s.nv != b.s.nv) throw ShapeMismatch("concat: signal shape mismatch");
          out.is_dir = false;
          out.s = Signal::zeros(a.s.nv, a.s.ch + b.s.ch);
          for (int v = 0; v < a.s.nv; ++v) {
            for (int c = 0; c < a.s.ch; ++c) out.s.at(v, c) = a.s.at(v, c);
            for (int c = 0; c < b.s.ch; ++c) out.s.at(v, a.s.ch + c) = b.s.at(v, c);
          }
        }
        break;
      }

      case OpKind::global_avg: {
        const Signal& f = ws->vals[n.in0].s;
        const std::vector<double>& areas = ctx.levels[n.level].areas;
        if ((int)areas.size() != f.nv)
          throw MissingContext("global_avg: vertex areas missing for level " +
                               std::to_string(n.level));
        double total = 0;
        for (double a : areas) total += a;
        out.is_dir = false;
        out.s = Signal::zeros(1, f.ch);
        for (int v = 0; v < f.nv; ++v)
          for (int c = 0; c < f.ch; ++c) out.s.at(0, c) += areas[v] * f.at(v, c);
        for (int c = 0; c < f.ch; ++c) out.s.at(0, c) /= total;
        break;
      }

      case OpKind::dense: {
        const Signal& f = ws->vals[n.in0].s;
        const DenseParams& p = dense[n.param];
        if (p.weight.rows() != f.ch)
          throw ShapeMismatch("dense: weight expects " +
                              std::to_string(p.weight.rows()) + " inputs, got " +
                              std::to_string(f.ch));
        MapRow F(f.a.data(), f.nv, f.ch);
        RowMat R = (F * p.weight).rowwise() + p.bias.transpose();
        out.is_dir = false;
        out.s = Signal::zeros(f.nv, (int)p.weight.cols());
        MapRowMut(out.s.a.data(), f.nv, out.s.ch) = R;
        break;
      }
    }
  }
  return ws->vals.back().s;
}

void Network::backward(const Signal& dlogits, const NetContext& ctx,
                       const Workspace& ws, Grads* grads) const {
  std::vector<Value> dvals(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) dvals[i] = zeros_like(ws.vals[i]);
  if (dlogits.nv != dvals.back().s.nv || dlogits.ch != dvals.back().s.ch)
    throw ShapeMismatch("backward: d(logits) shape mismatch");
  dvals.back().s = dlogits;

  for (int i = (int)nodes.size() - 1; i >= 0; --i) {
    const Node& n = nodes[i];
    const Value& dout = dvals[i];
    switch (n.kind) {
      case OpKind::input:
        break;

      case OpKind::lift: {
        Signal& din = dvals[n.in0].s;
        const DirectionalSignal& dd = dout.d;
        for (int v = 0; v < dd.nv; ++v)
          for (int j = 0; j < dd.nth; ++j)
            for (int c = 0; c < dd.ch; ++c) din.at(v, c) += dd.at(v, j, c);
        break;
      }

      case OpKind::dir_layer: {
        const WindowTensors& t = level_tensors(ctx, n.level, "dir_layer");
        const LayerParams& p = conv[n.param];
        LayerParams& g = grads->conv[n.param];
        const DirectionalSignal& phi = ws.vals[n.in0].d;
        const std::vector<double>& pre = ws.pre[i];
        const int nv = phi.nv, nth = phi.nth, cin = phi.ch,
                  cout = p.kernel.out_ch, nr = p.kernel.n_rho;

        // dz = dout * xi'(pre)
        std::vector<double> dz(pre.size());
        for (size_t k = 0; k < pre.size(); ++k)
          dz[k] = dout.d.a[k] * activation_grad(p.act, pre[k]);

        MapRow DZ(dz.data(), (Eigen::Index)nv * nth, cout);
        MapRow PHI(phi.a.data(), (Eigen::Index)nv * nth, cin);
        g.bias += DZ.colwise().sum().transpose();
        g.central += PHI.transpose() * DZ;
        MapRowMut DPHI(dvals[n.in0].d.a.data(), (Eigen::Index)nv * nth, cin);
        DPHI += DZ * p.central.transpose();

        const WindowValues pb = dir_pull_back(phi, t);
        MapRow PB(pb.a.data(), nv, (Eigen::Index)nr * nth * cin);
        RowMat dPB = RowMat::Zero(nv, (Eigen::Index)nr * nth * cin);
        for (int l = 0; l < nth; ++l) {
          RowMat dzl(nv, cout);
          for (int v = 0; v < nv; ++v)
            for (int q = 0; q < cout; ++q)
              dzl(v, q) = dz[((size_t)v * nth + l) * cout + q];
          const RowMat G = PB.transpose() * dzl; // (nr*nth*cin) x cout
          for (int ri = 0; ri < nr; ++ri)
            for (int j = 0; j < nth; ++j) {
              const int js = ((j - l) % nth + nth) % nth;
              for (int pch = 0; pch < cin; ++pch)
                for (int q = 0; q < cout; ++q)
                  g.kernel.at(ri, js, pch, q) += G((ri * nth + j) * cin + pch, q);
            }
          dPB += dzl * rotated_kernel(p.kernel, l).transpose();
        }

        // Scatter window-value gradients back through the interpolation.
        DirectionalSignal& dphi = dvals[n.in0].d;
        for (int v = 0; v < nv; ++v)
          for (int ri = 0; ri < nr; ++ri)
            for (int j = 0; j < nth; ++j) {
              if (!t.valid[t.point_index(v, ri, j)]) continue;
              for (int m = 0; m < 3; ++m) {
                const size_t s = t.support_index(v, ri, j, m);
                const double w = t.W[s];
                const int e = t.E[s];
                const int fl = t.gamma_floor[s];
                const double fr = t.gamma_frac[s];
                const int fc = fl + 1 == nth ? 0 : fl + 1;
                for (int c = 0; c < cin; ++c) {
                  const double dp = dPB(v, (ri * nth + j) * cin + c);
                  dphi.at(e, fl, c) += w * (1.0 - fr) * dp;
                  dphi.at(e, fc, c) += w * fr * dp;
                }
              }
            }
        break;
      }

      case OpKind::gc_layer: {
        const WindowTensors& t = level_tensors(ctx, n.level, "gc_layer");
        const LayerParams& p = conv[n.param];
        LayerParams& g = grads->conv[n.param];
        const Signal& f = ws.vals[n.in0].s;
        const std::vector<double>& pre = ws.pre[i];
        const std::vector<int>& arg = ws.argmax[i];
        const int nv = f.nv, cin = f.ch, cout = p.kernel.out_ch,
                  nth = p.kernel.n_theta, nr = p.kernel.n_rho;

        std::vector<double> dz(pre.size());
        for (size_t k = 0; k < pre.size(); ++k)
          dz[k] = dout.s.a[k] * activation_grad(p.act, pre[k]);

        Signal& df = dvals[n.in0].s;
        const WindowValues pb = pull_back(f, t);
        for (int v = 0; v < nv; ++v)
          for (int q = 0; q < cout; ++q) {
            const double dzq = dz[(size_t)v * cout + q];
            if (dzq == 0.0) continue;
            const int l = arg[(size_t)v * cout + q];
            g.bias(q) += dzq;
            for (int pch = 0; pch < cin; ++pch) {
              g.central(pch, q) += f.at(v, pch) * dzq;
              df.at(v, pch) += p.central(pch, q) * dzq;
            }
            for (int ri = 0; ri < nr; ++ri)
              for (int j = 0; j < nth; ++j) {
                const int js = ((j - l) % nth + nth) % nth;
                for (int pch = 0; pch < cin; ++pch)
                  g.kernel.at(ri, js, pch, q) += pb.at(v, ri, j, pch) * dzq;
              }
          }
        // d(pull_back) scatter: dpb[v,i,j,p] = sum_q dz[v,q] K[i,(j-l*)%nth,p,q]
        for (int v = 0; v < nv; ++v)
          for (int ri = 0; ri < nr; ++ri)
            for (int j = 0; j < nth; ++j) {
              if (!t.valid[t.point_index(v, ri, j)]) continue;
              for (int pch = 0; pch < cin; ++pch) {
                double dp = 0.0;
                for (int q = 0; q < cout; ++q) {
                  const double dzq = dz[(size_t)v * cout + q];
                  if (dzq == 0.0) continue;
                  const int l = arg[(size_t)v * cout + q];
                  const int js = ((j - l) % nth + nth) % nth;
                  dp += dzq * p.kernel.at(ri, js, pch, q);
                }
                if (dp == 0.0) continue;
                for (int m = 0; m < 3; ++m) {
                  const size_t s = t.support_index(v, ri, j, m);
                  df.at(t.E[s], pch) += t.W[s] * dp;
                }
              }
            }
        break;
      }

      case OpKind::amp: {
        DirectionalSignal& din = dvals[n.in0].d;
        const std::vector<int>& arg = ws.argmax[i];
        for (int v = 0; v < dout.s.nv; ++v)
          for (int c = 0; c < dout.s.ch; ++c)
            din.at(v, arg[(size_t)v * dout.s.ch + c], c) += dout.s.at(v, c);
        break;
      }

      case OpKind::pool: {
        const SimplificationMap& m = level_map(ctx, n.level, "pool");
        Value& din = dvals[n.in0];
        if (dout.is_dir) {
          const int nthf = din.d.nth, nthc = dout.d.nth, ch = dout.d.ch;
          for (int u = 0; u < dout.d.nv; ++u) {
            const int fv = m.coarse_to_fine[u];
            const double off = m.angle_offset[fv] * nthf / two_pi;
            for (int b = 0; b < nthc; ++b) {
              int g0, g1;
              double t;
              pool_coord((double)b * nthf / nthc - off, nthf, &g0, &g1, &t);
              for (int c = 0; c < ch; ++c) {
                const double d = dout.d.at(u, b, c);
                din.d.at(fv, g0, c) += (1.0 - t) * d;
                din.d.at(fv, g1, c) += t * d;
              }
            }
          }
        } else {
          for (int u = 0; u < dout.s.nv; ++u)
            for (int c = 0; c < dout.s.ch; ++c)
              din.s.at(m.coarse_to_fine[u], c) += dout.s.at(u, c);
        }
        break;
      }

      case OpKind::unpool: {
        const SimplificationMap& m = level_map(ctx, n.level, "unpool");
        Value& din = dvals[n.in0];
        if (dout.is_dir) {
          const int nthc = din.d.nth, nthf = dout.d.nth, ch = dout.d.ch;
          for (int v = 0; v < dout.d.nv; ++v) {
            const int u = m.fine_to_coarse[v];
            const double off = m.angle_offset[v] * nthc / two_pi;
            for (int a = 0; a < nthf; ++a) {
              int g0, g1;
              double t;
              pool_coord((double)a * nthc / nthf + off, nthc, &g0, &g1, &t);
              for (int c = 0; c < ch; ++c) {
                const double d = dout.d.at(v, a, c);
                din.d.at(u, g0, c) += (1.0 - t) * d;
                din.d.at(u, g1, c) += t * d;
              }
            }
          }
        } else {
          for (int v = 0; v < dout.s.nv; ++v)
            for (int c = 0; c < dout.s.ch; ++c)
              din.s.at(m.fine_to_coarse[v], c) += dout.s.at(v, c);
        }
        break;
      }

      case OpKind::res_add: {
        if (dout.is_dir) {
          for (size_t k = 0; k < dout.d.a.size(); ++k) {
            dvals[n.in0].d.a[k] += dout.d.a[k];
            dvals[n.in1].d.a[k] += dout.d.a[k];
          }
        } else {
          for (size_t k = 0; k < dout.s.a.size(); ++k) {
            dvals[n.in0].s.a[k] += dout.s.a[k];
            dvals[n.in1].s.a[k] += dout.s.a[k];
          }
        }
        break;
      }

      case OpKind::concat: {
        if (dout.is_dir) {
          DirectionalSignal& da = dvals[n.in0].d;
          DirectionalSignal& db = dvals[n.in1].d;
          for (int v = 0; v < dout.d.nv; ++v)
            for (int j = 0; j < dout.d.nth; ++j) {
              for (int c = 0; c < da.ch; ++c) da.at(v, j, c) += dout.d.at(v, j, c);
              for (int c = 0; c < db.ch; ++c)
                db.at(v, j, c) += dout.d.at(v, j, da.ch + c);
            }
        } else {
          Signal& da = dvals[n.in0].s;
          Signal& db = dvals[n.in1].s;
          for (int v = 0; v < dout.s.nv; ++v) {
            for (int c = 0; c < da.ch; ++c) da.at(v, c) += dout.s.at(v, c);
            for (int c = 0; c < db.ch; ++c) db.at(v, c) += dout.s.at(v, da.ch + c);
          }
        }
        break;
      }

      case OpKind::global_avg: {
        const std::vector<double>& areas = ctx.levels[n.level].areas;
        double total = 0;
        for (double a : areas) total += a;
        Signal& din = dvals[n.in0].s;
        for (int v = 0; v < din.nv; ++v)
          for (int c = 0; c < din.ch; ++c)
            din.at(v, c) += areas[v] / total * dout.s.at(0, c);
        break;
      }

      case OpKind::dense: {
        const Signal& f = ws.vals[n.in0].s;
        const DenseParams& p = dense[n.param];
        DenseParams& g = grads->dense[n.param];
        MapRow F(f.a.data(), f.nv, f.ch);
        MapRow D(dout.s.a.data(), dout.s.nv, dout.s.ch);
        g.weight += F.transpose() * D;
        g.bias += D.colwise().sum().transpose();
        MapRowMut(dvals[n.in0].s.a.data(), f.nv, f.ch) += D * p.weight.transpose();
        break;
      }
    }
  }
}

namespace {

LayerParams init_layer(std::mt19937_64& rng, int n_rho, int n_theta, int cin,
                       int cout, Activation act, bool zero) {
  LayerParams p;
  p.kernel = PolarKernel::zeros(n_rho, n_theta, cin, cout);
  p.central = Eigen::MatrixXd::Zero(cin, cout);
  p.bias = Eigen::VectorXd::Zero(cout);
  p.act = act;
  if (!zero) {
    const double stddev = std::sqrt(2.0 / ((double)n_rho * n_theta * cin + cin));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : p.kernel.a) x = dist(rng);
    for (int r = 0; r < p.central.rows(); ++r)
      for (int c = 0; c < p.central.cols(); ++c) p.central(r, c) = dist(rng);
  }
  return p;
}

DenseParams init_dense(std::mt19937_64& rng, int cin, int cout) {
  DenseParams p;
  p.weight = Eigen::MatrixXd::Zero(cin, cout);
  p.bias = Eigen::VectorXd::Zero(cout);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin + cout)));
  for (int r = 0; r < cin; ++r)
    for (int c = 0; c < cout; ++c) p.weight(r, c) = dist(rng);
  return p;
}

void validate_arch(const ArchConfig& cfg) {
  if (cfg.model != "mdgcnn" && cfg.model != "gcnn")
    throw ConfigInvalid("unknown model '" + cfg.model + "'");
  if (cfg.n_rho < 1) throw ConfigInvalid("n_rho must be at least 1");
  if (cfg.n_theta < 2) throw ConfigInvalid("n_theta must be at least 2");
  if (cfg.width < 1) throw ConfigInvalid("width must be at least 1");
  if (cfg.stacks < 1) throw ConfigInvalid("stacks must be at least 1");
  if (cfg.blocks < 0) throw ConfigInvalid("blocks must be non-negative");
  if (cfg.n_classes < 2) throw ConfigInvalid("n_classes must be at least 2");
}

// Shared builder state. "mdgcnn" chains directional layers; "gcnn" chains
// rotation-max layers, so values stay plain signals and need no lift/amp.
struct Builder {
  Network& net;
  std::mt19937_64 rng;
  const ArchConfig& cfg;
  Activation act;
  bool directional;

  Builder(Network& n, const ArchConfig& c)
      : net(n), rng(c.seed), cfg(c), act(parse_activation(c.activation)),
        directional(c.model == "mdgcnn") {}

  int conv_node(int level, int cin, int cout, Activation a, bool zero, int input) {
    const int p = (int)net.conv.size();
    net.conv.push_back(init_layer(rng, cfg.n_rho, cfg.n_theta, cin, cout, a, zero));
    net.nodes.push_back({directional ? OpKind::dir_layer : OpKind::gc_layer, input,
                         -1, level, p});
    return (int)net.nodes.size() - 1;
  }

  // Residual block: x + L2(L1(x)); L1 carries the nonlinearity, L2 is linear
  // and zero-initialized so every block starts as the identity.
  int block(int level, int width, int x_node) {
    const int h = conv_node(level, width, width, act, false, x_node);
    const int y = conv_node(level, width, width, Activation::identity, true, h);
    net.nodes.push_back({OpKind::res_add, x_node, y, level, -1});
    return (int)net.nodes.size() - 1;
  }

  int stem(int in_ch) {
    net.nodes.push_back({OpKind::input, -1, -1, 0, -1});
    int cur = 0;
    if (directional) {
      net.nodes.push_back({OpKind::lift, cur, -1, 0, -1});
      cur = (int)net.nodes.size() - 1;
    }
    return conv_node(0, in_ch, cfg.width, act, false, cur);
  }

  void head(int level, int width, int cur) {
    if (directional) {
      net.nodes.push_back({OpKind::amp, cur, -1, level, -1});
      cur = (int)net.nodes.size() - 1;
    }
    net.nodes.push_back({OpKind::global_avg, cur, -1, level, -1});
    cur = (int)net.nodes.size() - 1;
    const int p = (int)net.dense.size();
    net.dense.push_back(init_dense(rng, width, cfg.n_classes));
    net.nodes.push_back({OpKind::dense, cur, -1, level, p});
  }
};

} // namespace

// Stacks of residual blocks; after each stack the mesh is pooled one level
// and the filter count doubles (the window radius doubles with the level).
Network build_resnet(int in_ch, const ArchConfig& cfg) {
  validate_arch(cfg);
  if (in_ch < 1) throw ConfigInvalid("input channel count must be at least 1");
  Network net;
  net.in_ch = in_ch;
  net.arch = cfg;
  net.arch.kind = "resnet";
  Builder b(net, net.arch);

  int cur = b.stem(in_ch);
  int level = 0;
  int width = cfg.width;
  for (int s = 0; s < cfg.stacks; ++s) {
    for (int k = 0; k < cfg.blocks; ++k) cur = b.block(level, width, cur);
    if (s + 1 < cfg.stacks) {
      net.nodes.push_back({OpKind::pool, cur, -1, level, -1});
      cur = (int)net.nodes.size() - 1;
      ++level;
      cur = b.conv_node(level, width, 2 * width, b.act, false, cur);
      width *= 2;
    }
  }
  b.head(level, width, cur);
  return net;
}

// Encoder/decoder with skip connections: pooling halves the mesh level by
// level while filters double; the decoder unpools, concatenates the skip and
// fuses back down, ending at full resolution with a per-vertex label head.
Network build_uresnet(int in_ch, const ArchConfig& cfg) {
  validate_arch(cfg);
  if (in_ch < 1) throw ConfigInvalid("input channel count must be at least 1");
  Network net;
  net.in_ch = in_ch;
  net.arch = cfg;
  net.arch.kind = "uresnet";
  Builder b(net, net.arch);

  int cur = b.stem(in_ch);
  const int levels = cfg.stacks;
  std::vector<int> skips;
  for (int L = 0; L < levels; ++L) {
    const int w = cfg.width << L;
    for (int k = 0; k < cfg.blocks; ++k) cur = b.block(L, w, cur);
    if (L + 1 < levels) {
      skips.push_back(cur);
      net.nodes.push_back({OpKind::pool, cur, -1, L, -1});
      cur = (int)net.nodes.size() - 1;
      cur = b.conv_node(L + 1, w, 2 * w, b.act, false, cur);
    }
  }
  for (int L = levels - 2; L >= 0; --L) {
    const int w = cfg.width << L;
    net.nodes.push_back({OpKind::unpool, cur, -1, L, -1});
    cur = (int)net.nodes.size() - 1;
    net.nodes.push_back({OpKind::concat, cur, skips[L], L, -1});
    cur = (int)net.nodes.size() - 1;
    cur = b.conv_node(L, 3 * w, w, b.act, false, cur);
    for (int k = 0; k < cfg.blocks; ++k) cur = b.block(L, w, cur);
  }
  if (b.directional) {
    net.nodes.push_back({OpKind::amp, cur, -1, 0, -1});
    cur = (int)net.nodes.size() - 1;
  }
  net.dense.push_back(init_dense(b.rng, cfg.width, cfg.n_classes));
  net.nodes.push_back({OpKind::dense, cur, -1, 0, 0});
  return net;
}

Network build_network(int in_ch, const ArchConfig& cfg) {
  if (cfg.kind == "resnet") return build_resnet(in_ch, cfg);
  if (cfg.kind == "uresnet") return build_uresnet(in_ch, cfg);
  throw ConfigInvalid("unknown architecture kind '" + cfg.kind + "'");
}

Signal softmax_rows(const Signal& logits) {
  Signal out = logits;
  for (int v = 0; v < out.nv; ++v) {
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < out.ch; ++c) m = std::max(m, out.at(v, c));
    double z = 0;
    for (int c = 0; c < out.ch; ++c) {
      out.at(v, c) = std::exp(out.at(v, c) - m);
      z += out.at(v, c);
    }
    for (int c = 0; c < out.ch; ++c) out.at(v, c) /= z;
  }
  return out;
}

double cross_entropy(const Signal& logits, const std::vector<int>& labels,
                     Signal* dlogits) {
  // a single label broadcasts over all rows, so whole-mesh classes can
  // supervise per-vertex heads
  if ((int)labels.size() != logits.nv && labels.size() != 1)
    throw ShapeMismatch("cross_entropy: need one label per row or one broadcast label");
  if (dlogits) *dlogits = Signal::zeros(logits.nv, logits.ch);
  double total = 0;
  for (int v = 0; v < logits.nv; ++v) {
    const int y = labels[labels.size() == 1 ? 0 : v];
    if (y < 0 || y >= logits.ch)
      throw ShapeMismatch("cross_entropy: label " + std::to_string(y) +
                          " out of range for " + std::to_string(logits.ch) +
                          " classes");
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < logits.ch; ++c) m = std::max(m, logits.at(v, c));
    double z = 0;
    for (int c = 0; c < logits.ch; ++c) z += std::exp(logits.at(v, c) - m);
    total += std::log(z) + m - logits.at(v, y);
    if (dlogits) {
      for (int c = 0; c < logits.ch; ++c)
        dlogits->at(v, c) =
            (std::exp(logits.at(v, c) - m) / z - (c == y ? 1.0 : 0.0)) / logits.nv;
    }
  }
  return total / logits.nv;
}

namespace {

// Flat views over every learnable scalar, in a fixed order shared by the
// parameter set and its gradient mirror.
std::vector<double*> flat_view(std::vector<LayerParams>& conv,
                               std::vector<DenseParams>& dense) {
  std::vector<double*> out;
  for (auto& p : conv) {
    for (double& x : p.kernel.a) out.push_back(&x);
    for (int c = 0; c < p.central.cols(); ++c)
      for (int r = 0; r < p.central.rows(); ++r) out.push_back(&p.central(r, c));
    for (int k = 0; k < p.bias.size(); ++k) out.push_back(&p.bias(k));
  }
  for (auto& p : dense) {
    for (int c = 0; c < p.weight.cols(); ++c)
      for (int r = 0; r < p.weight.rows(); ++r) out.push_back(&p.weight(r, c));
    for (int k = 0; k < p.bias.size(); ++k) out.push_back(&p.bias(k));
  }
  return out;
}

int argmax_row(const Signal& s, int row) {
  int best = 0;
  for (int c = 1; c < s.ch; ++c)
    if (s.at(row, c) > s.at(row, best)) best = c;
  return best;
}

// fraction of rows voting for the label; 0/1 for single-row classifiers
double label_accuracy(const Signal& logits, int label) {
  double hit = 0;
  for (int v = 0; v < logits.nv; ++v)
    hit += argmax_row(logits, v) == label ? 1.0 : 0.0;
  return hit / logits.nv;
}

} // namespace

double evaluate(const Network& net, const NetContext& ctx, const Dataset& data,
                int split_flag, double* loss_out) {
  std::vector<int> idx;
  for (size_t k = 0; k < data.xs.size(); ++k)
    if (data.split[k] == split_flag) idx.push_back((int)k);
  if (idx.empty()) {
    if (loss_out) *loss_out = 0;
    return 0;
  }
  std::vector<double> losses(idx.size());
  std::vector<double> correct(idx.size());
  parallel_for((int)idx.size(), [&](int k) {
    Workspace ws;
    const Signal logits = net.forward(data.xs[idx[k]], ctx, &ws);
    losses[k] = cross_entropy(logits, {data.ys[idx[k]]});
    correct[k] = label_accuracy(logits, data.ys[idx[k]]);
  });
  double loss = 0, acc = 0;
  for (size_t k = 0; k < idx.size(); ++k) {
    loss += losses[k];
    acc += correct[k];
  }
  if (loss_out) *loss_out = loss / idx.size();
  return acc / idx.size();
}

TrainResult train(Network& net, const NetContext& ctx, const Dataset& data,
                  const TrainConfig& cfg) {
  if (data.xs.size() != data.ys.size() || data.xs.size() != data.split.size())
    throw ShapeMismatch("train: dataset arrays disagree in length");
  if (cfg.epochs < 0 || cfg.batch < 1)
    throw ConfigInvalid("train: epochs must be non-negative and batch positive");
  net.check(ctx);

  std::vector<int> train_idx;
  for (size_t k = 0; k < data.xs.size(); ++k)
    if (data.split[k] == 0) train_idx.push_back((int)k);
  if (train_idx.empty()) throw ConfigInvalid("train: no training samples");

  std::vector<double*> params = flat_view(net.conv, net.dense);
  const size_t np = params.size();
  std::vector<double> m(np, 0.0), v(np, 0.0);
  long long t = 0;

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw IoError("cannot open training log '" + cfg.log_path + "'");
    log << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  }

  std::mt19937_64 rng(cfg.seed);
  Grads batch_grads = net.make_grads();
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();

  if (cfg.epochs == 0) { // report the untrained network's metrics
    result.train_acc = evaluate(net, ctx, data, 0, &result.train_loss);
    result.val_acc = evaluate(net, ctx, data, 1, &result.val_loss);
    result.epochs_run = 0;
    return result;
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double ep_loss = 0;
    double ep_correct = 0;

    for (size_t base = 0; base < train_idx.size(); base += cfg.batch) {
      const int bsz = (int)std::min((size_t)cfg.batch, train_idx.size() - base);
      std::vector<Grads> sample_grads;
      sample_grads.reserve(bsz);
      for (int k = 0; k < bsz; ++k) sample_grads.push_back(net.make_grads());
      std::vector<double> losses(bsz);
      std::vector<double> correct(bsz);

      parallel_for(bsz, [&](int k) {
        const int s = train_idx[base + k];
        Workspace ws;
        const Signal logits = net.forward(data.xs[s], ctx, &ws);
        Signal dl;
        losses[k] = cross_entropy(logits, {data.ys[s]}, &dl);
        correct[k] = label_accuracy(logits, data.ys[s]);
        net.backward(dl, ctx, ws, &sample_grads[k]);
      });

      batch_grads.zero();
      for (int k = 0; k < bsz; ++k) {
        batch_grads.add(sample_grads[k]);
        ep_loss += losses[k];
        ep_correct += correct[k];
        if (!std::isfinite(losses[k]))
          throw NonFiniteLoss("loss became non-finite at epoch " +
                              std::to_string(epoch));
      }

      std::vector<double*> gview = flat_view(batch_grads.conv, batch_grads.dense);
      ++t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, (double)t);
      const double bc2 = 1.0 - std::pow(cfg.beta2, (double)t);
      for (size_t k = 0; k < np; ++k) {
        const double gk = *gview[k] / bsz;
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
        *params[k] -= cfg.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.adam_eps);
      }
    }

    result.train_loss = ep_loss / train_idx.size();
    result.train_acc = ep_correct / train_idx.size();
    result.val_acc = evaluate(net, ctx, data, 1, &result.val_loss);
    result.epochs_run = epoch + 1;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log)
      log << epoch << ',' << result.train_loss << ',' << result.train_acc << ','
          << result.val_loss << ',' << result.val_acc << ',' << secs << '\n';
    if (cfg.verbose)
      std::printf("epoch %d train_loss %.4f train_acc %.3f val_loss %.4f val_acc %.3f\n",
                  epoch, result.train_loss, result.train_acc, result.val_loss,
                  result.val_acc);
  }
  return result;
}

namespace {

void write_u32(std::ofstream& f, std::uint32_t x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof x);
}
void write_u64(std::ofstream& f, std::uint64_t x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof x);
}
void write_str(std::ofstream& f, const std::string& s) {
  write_u32(f, (std::uint32_t)s.size());
  f.write(s.data(), (std::streamsize)s.size());
}
void write_doubles(std::ofstream& f, const double* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), (std::streamsize)(n * sizeof(double)));
}

std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t x = 0;
  f.read(reinterpret_cast<char*>(&x), sizeof x);
  return x;
}
std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t x = 0;
  f.read(reinterpret_cast<char*>(&x), sizeof x);
  return x;
}
std::string read_str(std::ifstream& f) {
  const std::uint32_t n = read_u32(f);
  if (n > (1u << 20)) throw IoError("model file corrupt: oversized string");
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}
void read_doubles(std::ifstream& f, double* p, size_t n) {
  f.read(reinterpret_cast<char*>(p), (std::streamsize)(n * sizeof(double)));
}

constexpr char kModelMagic[8] = {'M', 'D', 'G', 'C', 'N', 'E', 'T', '1'};

} // namespace

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(kModelMagic, 8);
  write_u32(f, 1); // version
  write_str(f, net.arch.kind);
  write_str(f, net.arch.model);
  write_u32(f, (std::uint32_t)net.arch.n_rho);
  write_u32(f, (std::uint32_t)net.arch.n_theta);
  write_u32(f, (std::uint32_t)net.arch.width);
  write_u32(f, (std::uint32_t)net.arch.stacks);
  write_u32(f, (std::uint32_t)net.arch.blocks);
  write_u32(f, (std::uint32_t)net.arch.n_classes);
  write_str(f, net.arch.activation);
  write_u64(f, net.arch.seed);
  write_u32(f, (std::uint32_t)net.in_ch);
  write_u32(f, (std::uint32_t)net.nodes.size());
  write_u32(f, (std::uint32_t)net.conv.size());
  write_u32(f, (std::uint32_t)net.dense.size());
  for (const auto& p : net.conv) {
    write_doubles(f, p.kernel.a.data(), p.kernel.a.size());
    write_doubles(f, p.central.data(), (size_t)p.central.size());
    write_doubles(f, p.bias.data(), (size_t)p.bias.size());
  }
  for (const auto& p : net.dense) {
    write_doubles(f, p.weight.data(), (size_t)p.weight.size());
    write_doubles(f, p.bias.data(), (size_t)p.bias.size());
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

Network load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kModelMagic, 8) != 0)
    throw IoError("'" + path + "' is not a model file");
  if (read_u32(f) != 1) throw IoError("unsupported model version");
  ArchConfig cfg;
  cfg.kind = read_str(f);
  cfg.model = read_str(f);
  cfg.n_rho = (int)read_u32(f);
  cfg.n_theta = (int)read_u32(f);
  cfg.width = (int)read_u32(f);
  cfg.stacks = (int)read_u32(f);
  cfg.blocks = (int)read_u32(f);
  cfg.n_classes = (int)read_u32(f);
  cfg.activation = read_str(f);
  cfg.seed = read_u64(f);
  const int in_ch = (int)read_u32(f);
  Network net = build_network(in_ch, cfg);
  if (read_u32(f) != net.nodes.size() || read_u32(f) != net.conv.size() ||
      read_u32(f) != net.dense.size())
    throw IoError("model file does not match its architecture description");
  for (auto& p : net.conv) {
    read_doubles(f, p.kernel.a.data(), p.kernel.a.size());
    read_doubles(f, p.central.data(), (size_t)p.central.size());
    read_doubles(f, p.bias.data(), (size_t)p.bias.size());
  }
  for (auto& p : net.dense) {
    read_doubles(f, p.weight.data(), (size_t)p.weight.size());
    read_doubles(f, p.bias.data(), (size_t)p.bias.size());
  }
  if (!f) throw IoError("model file truncated");
  return net;
}

} // namespace mdgc
