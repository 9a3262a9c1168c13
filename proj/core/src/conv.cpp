#include "mdgc/conv.hpp"

#include <cmath>
#include <string>

#include "mdgc/error.hpp"

namespace mdgc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<const RowMat>;

void check_spec(const WindowTensors& t, int ch, const char* what) {
  if (t.nv <= 0)
    throw ShapeMismatch(std::string(what) + ": empty window tensors");
  if (ch <= 0)
    throw ShapeMismatch(std::string(what) + ": signal has no channels");
}

void check_kernel(const PolarKernel& K, const WindowTensors& t, int in_ch,
                  const char* what) {
  if (K.n_rho != t.spec.n_rho || K.n_theta != t.spec.n_theta)
    throw ShapeMismatch(std::string(what) + ": kernel bins " +
                        std::to_string(K.n_rho) + "x" + std::to_string(K.n_theta) +
                        " do not match window bins " + std::to_string(t.spec.n_rho) +
                        "x" + std::to_string(t.spec.n_theta));
  if (K.in_ch != in_ch)
    throw ShapeMismatch(std::string(what) + ": kernel expects " +
                        std::to_string(K.in_ch) + " input channels, signal has " +
                        std::to_string(in_ch));
}

// Kernel realigned to rotation l, flattened so that row (i*nth + j)*in + p
// matches the pulled-back window layout: rot[(i,j,p), q] = K[i, (j-l) mod nth, p, q].
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

// Window coverage sum_m W[v,i,j,m]; zero at invalid points. Used by the
// optional all-ones normalization.
std::vector<double> window_coverage(const WindowTensors& t) {
  const int nr = t.spec.n_rho, nth = t.spec.n_theta;
  std::vector<double> cov((size_t)t.nv * nr * nth, 0.0);
  for (int v = 0; v < t.nv; ++v)
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nth; ++j) {
        double s = 0.0;
        for (int m = 0; m < 3; ++m)
          s += t.W[t.support_index(v, i, j, m)];
        cov[((size_t)v * nr + i) * nth + j] = s;
      }
  return cov;
}

// norm[v, l, q] = sum_{i,j,p} coverage[v,i,j] * K[i,(j-l) mod nth, p, q].
// Divides responses where |norm| is meaningful, zeroes them elsewhere.
void apply_normalization(std::vector<double>& resp, const std::vector<double>& cov,
                         const PolarKernel& K, int nv, int nl) {
  const int nr = K.n_rho, nth = K.n_theta, cout = K.out_ch;
  std::vector<double> ksum((size_t)nr * nth * cout, 0.0); // sum over p
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nth; ++j)
      for (int p = 0; p < K.in_ch; ++p)
        for (int q = 0; q < cout; ++q)
          ksum[((size_t)i * nth + j) * cout + q] += K.at(i, j, p, q);
  for (int v = 0; v < nv; ++v)
    for (int l = 0; l < nl; ++l)
      for (int q = 0; q < cout; ++q) {
        double norm = 0.0;
        for (int i = 0; i < nr; ++i)
          for (int j = 0; j < nth; ++j) {
            const int js = ((j - l) % nth + nth) % nth;
            norm += cov[((size_t)v * nr + i) * nth + j] *
                    ksum[((size_t)i * nth + js) * cout + q];
          }
        double& r = resp[((size_t)v * nl + l) * cout + q];
        r = std::abs(norm) > 1e-12 ? r / norm : 0.0;
      }
}

} // namespace

double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh_fn: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

double activation_grad(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh_fn: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

DirectionalSignal lift(const Signal& f, int n_theta) {
  if (f.nv <= 0 || f.ch <= 0) throw ShapeMismatch("lift: empty signal");
  if (n_theta <= 0) throw ShapeMismatch("lift: n_theta must be positive");
  DirectionalSignal out = DirectionalSignal::zeros(f.nv, n_theta, f.ch);
  for (int v = 0; v < f.nv; ++v)
    for (int j = 0; j < n_theta; ++j)
      for (int c = 0; c < f.ch; ++c) out.at(v, j, c) = f.at(v, c);
  return out;
}

WindowValues pull_back(const Signal& f, const WindowTensors& t) {
  check_spec(t, f.ch, "pull_back");
  if (f.nv != t.nv)
    throw ShapeMismatch("pull_back: signal has " + std::to_string(f.nv) +
                        " vertices, windows have " + std::to_string(t.nv));
  const int nr = t.spec.n_rho, nth = t.spec.n_theta, ch = f.ch;
  WindowValues out = WindowValues::zeros(t.nv, nr, nth, ch);
  for (int v = 0; v < t.nv; ++v)
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nth; ++j) {
        if (!t.valid[t.point_index(v, i, j)]) continue;
        double* acc = &out.at(v, i, j, 0);
        for (int m = 0; m < 3; ++m) {
          const size_t s = t.support_index(v, i, j, m);
          const double w = t.W[s];
          const int e = t.E[s];
          const double* fv = &f.a[(size_t)e * ch];
          for (int c = 0; c < ch; ++c) acc[c] += w * fv[c];
        }
      }
  return out;
}

WindowValues dir_pull_back(const DirectionalSignal& phi, const WindowTensors& t) {
  check_spec(t, phi.ch, "dir_pull_back");
  if (phi.nv != t.nv)
    throw ShapeMismatch("dir_pull_back: signal has " + std::to_string(phi.nv) +
                        " vertices, windows have " + std::to_string(t.nv));
  if (phi.nth != t.spec.n_theta)
    throw ShapeMismatch("dir_pull_back: signal has " + std::to_string(phi.nth) +
                        " angular bins, windows have " +
                        std::to_string(t.spec.n_theta));
  const int nr = t.spec.n_rho, nth = t.spec.n_theta, ch = phi.ch;
  WindowValues out = WindowValues::zeros(t.nv, nr, nth, ch);
  for (int v = 0; v < t.nv; ++v)
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nth; ++j) {
        if (!t.valid[t.point_index(v, i, j)]) continue;
        double* acc = &out.at(v, i, j, 0);
        for (int m = 0; m < 3; ++m) {
          const size_t s = t.support_index(v, i, j, m);
          const double w = t.W[s];
          const int e = t.E[s];
          const int fl = t.gamma_floor[s];
          const double fr = t.gamma_frac[s];
          const int fc = fl + 1 == nth ? 0 : fl + 1;
          const double* lo = &phi.a[((size_t)e * nth + fl) * ch];
          const double* hi = &phi.a[((size_t)e * nth + fc) * ch];
          for (int c = 0; c < ch; ++c)
            acc[c] += w * (lo[c] + fr * (hi[c] - lo[c]));
        }
      }
  return out;
}

DirectionalSignal dir_conv(const DirectionalSignal& phi, const PolarKernel& K,
                           const WindowTensors& t, ConvOptions opts) {
  check_kernel(K, t, phi.ch, "dir_conv");
  const WindowValues pb = dir_pull_back(phi, t);
  const int nv = t.nv, nth = t.spec.n_theta, cout = K.out_ch;
  MapRow PB(pb.a.data(), nv, (Eigen::Index)t.spec.n_rho * nth * phi.ch);
  DirectionalSignal out = DirectionalSignal::zeros(nv, nth, cout);
  for (int l = 0; l < nth; ++l) {
    const RowMat R = PB * rotated_kernel(K, l);
    for (int v = 0; v < nv; ++v)
      for (int q = 0; q < cout; ++q) out.at(v, l, q) = R(v, q);
  }
  if (opts.normalize)
    apply_normalization(out.a, window_coverage(t), K, nv, nth);
  return out;
}

Signal geodesic_conv(const Signal& f, const PolarKernel& K,
                     const WindowTensors& t, ConvOptions opts) {
  check_kernel(K, t, f.ch, "geodesic_conv");
  const WindowValues pb = pull_back(f, t);
  const int nv = t.nv, nth = t.spec.n_theta, cout = K.out_ch;
  MapRow PB(pb.a.data(), nv, (Eigen::Index)t.spec.n_rho * nth * f.ch);
  // All rotation responses first so optional normalization sees raw values.
  std::vector<double> resp((size_t)nv * nth * cout, 0.0);
  for (int l = 0; l < nth; ++l) {
    const RowMat R = PB * rotated_kernel(K, l);
    for (int v = 0; v < nv; ++v)
      for (int q = 0; q < cout; ++q)
        resp[((size_t)v * nth + l) * cout + q] = R(v, q);
  }
  if (opts.normalize)
    apply_normalization(resp, window_coverage(t), K, nv, nth);
  Signal out = Signal::zeros(nv, cout);
  for (int v = 0; v < nv; ++v)
    for (int q = 0; q < cout; ++q) {
      double best = resp[((size_t)v * nth + 0) * cout + q];
      for (int l = 1; l < nth; ++l) {
        const double r = resp[((size_t)v * nth + l) * cout + q];
        if (r > best) best = r;
      }
      out.at(v, q) = best;
    }
  return out;
}

Signal angular_max_pool(const DirectionalSignal& phi, std::vector<int>* argmax) {
  if (phi.nv <= 0 || phi.nth <= 0 || phi.ch <= 0)
    throw ShapeMismatch("angular_max_pool: empty signal");
  Signal out = Signal::zeros(phi.nv, phi.ch);
  if (argmax) argmax->assign((size_t)phi.nv * phi.ch, 0);
  for (int v = 0; v < phi.nv; ++v)
    for (int c = 0; c < phi.ch; ++c) {
      double best = phi.at(v, 0, c);
      int bj = 0;
      for (int j = 1; j < phi.nth; ++j) {
        const double x = phi.at(v, j, c);
        if (x > best) { best = x; bj = j; }
      }
      out.at(v, c) = best;
      if (argmax) (*argmax)[(size_t)v * phi.ch + c] = bj;
    }
  return out;
}

DirectionalSignal dir_layer(const DirectionalSignal& phi, const LayerParams& params,
                            const WindowTensors& t) {
  const PolarKernel& K = params.kernel;
  if (params.central.rows() != phi.ch || params.central.cols() != K.out_ch)
    throw ShapeMismatch("dir_layer: central matrix is " +
                        std::to_string(params.central.rows()) + "x" +
                        std::to_string(params.central.cols()) + ", expected " +
                        std::to_string(phi.ch) + "x" + std::to_string(K.out_ch));
  if (params.bias.size() != K.out_ch)
    throw ShapeMismatch("dir_layer: bias size mismatch");
  DirectionalSignal out = dir_conv(phi, K, t);
  const int nv = out.nv, nth = out.nth, cout = out.ch;
  for (int v = 0; v < nv; ++v)
    for (int l = 0; l < nth; ++l) {
      Eigen::Map<const Eigen::VectorXd> x(&phi.a[((size_t)v * nth + l) * phi.ch],
                                          phi.ch);
      const Eigen::VectorXd cen = params.central.transpose() * x + params.bias;
      for (int q = 0; q < cout; ++q) {
        double& z = out.at(v, l, q);
        z = apply_activation(params.act, z + cen(q));
      }
    }
  return out;
}

Signal gc_layer(const Signal& f, const LayerParams& params, const WindowTensors& t,
                std::vector<int>* argmax) {
  const PolarKernel& K = params.kernel;
  if (params.central.rows() != f.ch || params.central.cols() != K.out_ch)
    throw ShapeMismatch("gc_layer: central matrix shape mismatch");
  if (params.bias.size() != K.out_ch)
    throw ShapeMismatch("gc_layer: bias size mismatch");
  check_kernel(K, t, f.ch, "gc_layer");
  const WindowValues pb = pull_back(f, t);
  const int nv = t.nv, nth = t.spec.n_theta, cout = K.out_ch;
  MapRow PB(pb.a.data(), nv, (Eigen::Index)t.spec.n_rho * nth * f.ch);
  MapRow F(f.a.data(), nv, f.ch);
  const RowMat cen = (F * params.central).rowwise() + params.bias.transpose();
  Signal out = Signal::zeros(nv, cout);
  if (argmax) argmax->assign((size_t)nv * cout, 0);
  std::vector<double> best((size_t)nv * cout,
                           -std::numeric_limits<double>::infinity());
  for (int l = 0; l < nth; ++l) {
    const RowMat R = PB * rotated_kernel(K, l);
    for (int v = 0; v < nv; ++v)
      for (int q = 0; q < cout; ++q) {
        const double z = apply_activation(params.act, R(v, q) + cen(v, q));
        double& b = best[(size_t)v * cout + q];
        if (z > b) {
          b = z;
          if (argmax) (*argmax)[(size_t)v * cout + q] = l;
        }
      }
  }
  for (int v = 0; v < nv; ++v)
    for (int q = 0; q < cout; ++q) out.at(v, q) = best[(size_t)v * cout + q];
  return out;
}

DirectionalSignal dir_conv_fixed(const DirectionalSignal& phi, const PolarKernel& K,
                                 const WindowTensors& t) {
  check_kernel(K, t, phi.ch, "dir_conv_fixed");
  if (phi.nv != t.nv || phi.nth != t.spec.n_theta)
    throw ShapeMismatch("dir_conv_fixed: signal/window shape mismatch");
  const int nv = t.nv, nr = t.spec.n_rho, nth = t.spec.n_theta, ch = phi.ch;
  const int cout = K.out_ch;
  DirectionalSignal out = DirectionalSignal::zeros(nv, nth, cout);
  WindowValues pb = WindowValues::zeros(nv, nr, nth, ch);
  for (int l = 0; l < nth; ++l) {
    // Pull back with the transported angle re-based to the queried direction:
    // bin offset (floor - j + l) mod nth, fractional part unchanged.
    std::fill(pb.a.begin(), pb.a.end(), 0.0);
    for (int v = 0; v < nv; ++v)
      for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nth; ++j) {
          if (!t.valid[t.point_index(v, i, j)]) continue;
          double* acc = &pb.at(v, i, j, 0);
          for (int m = 0; m < 3; ++m) {
            const size_t s = t.support_index(v, i, j, m);
            const double w = t.W[s];
            const int e = t.E[s];
            const int fl = ((t.gamma_floor[s] - j + l) % nth + nth) % nth;
            const double fr = t.gamma_frac[s];
            const int fc = fl + 1 == nth ? 0 : fl + 1;
            const double* lo = &phi.a[((size_t)e * nth + fl) * ch];
            const double* hi = &phi.a[((size_t)e * nth + fc) * ch];
            for (int c = 0; c < ch; ++c)
              acc[c] += w * (lo[c] + fr * (hi[c] - lo[c]));
          }
        }
    MapRow PB(pb.a.data(), nv, (Eigen::Index)nr * nth * ch);
    const RowMat R = PB * rotated_kernel(K, l);
    for (int v = 0; v < nv; ++v)
      for (int q = 0; q < cout; ++q) out.at(v, l, q) = R(v, q);
  }
  return out;
}

} // namespace mdgc
