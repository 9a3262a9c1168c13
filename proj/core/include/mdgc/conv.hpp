#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mdgc/windows.hpp"

namespace mdgc {

// Per-vertex signal, nv x channels, row-major.
struct Signal {
  int nv = 0, ch = 0;
  std::vector<double> a;

  static Signal zeros(int nv, int ch) { return {nv, ch, std::vector<double>((size_t)nv * ch, 0.0)}; }
  double& at(int v, int c) { return a[(size_t)v * ch + c]; }
  double at(int v, int c) const { return a[(size_t)v * ch + c]; }
};

// Directional signal, nv x n_theta x channels: one value per vertex,
// angular bin, and channel.
struct DirectionalSignal {
  int nv = 0, nth = 0, ch = 0;
  std::vector<double> a;

  static DirectionalSignal zeros(int nv, int nth, int ch) {
    return {nv, nth, ch, std::vector<double>((size_t)nv * nth * ch, 0.0)};
  }
  double& at(int v, int j, int c) { return a[((size_t)v * nth + j) * ch + c]; }
  double at(int v, int j, int c) const { return a[((size_t)v * nth + j) * ch + c]; }
};

// Polar template: n_rho x n_theta x in x out.
struct PolarKernel {
  int n_rho = 0, n_theta = 0, in_ch = 0, out_ch = 0;
  std::vector<double> a;

  static PolarKernel zeros(int n_rho, int n_theta, int in_ch, int out_ch) {
    return {n_rho, n_theta, in_ch, out_ch,
            std::vector<double>((size_t)n_rho * n_theta * in_ch * out_ch, 0.0)};
  }
  double& at(int i, int j, int p, int q) {
    return a[(((size_t)i * n_theta + j) * in_ch + p) * out_ch + q];
  }
  double at(int i, int j, int p, int q) const {
    return a[(((size_t)i * n_theta + j) * in_ch + p) * out_ch + q];
  }
};

// Window-sampled values: nv x n_rho x n_theta x channels.
struct WindowValues {
  int nv = 0, n_rho = 0, n_theta = 0, ch = 0;
  std::vector<double> a;

  static WindowValues zeros(int nv, int n_rho, int n_theta, int ch) {
    return {nv, n_rho, n_theta, ch,
            std::vector<double>((size_t)nv * n_rho * n_theta * ch, 0.0)};
  }
  double& at(int v, int i, int j, int c) {
    return a[(((size_t)v * n_rho + i) * n_theta + j) * ch + c];
  }
  double at(int v, int i, int j, int c) const {
    return a[(((size_t)v * n_rho + i) * n_theta + j) * ch + c];
  }
};

enum class Activation { relu, identity, tanh_fn };

double apply_activation(Activation act, double x);
double activation_grad(Activation act, double x); // derivative at pre-activation x

// One convolutional layer's learnables: polar kernel K, central matrix C
// (shared across directions), bias B, pointwise nonlinearity.
struct LayerParams {
  PolarKernel kernel;
  Eigen::MatrixXd central; // in x out
  Eigen::VectorXd bias;    // out
  Activation act = Activation::identity;
};

struct ConvOptions {
  // Divide the template response by the response to the all-ones signal
  // (patch-operator normalization). Off by default.
  bool normalize = false;
};

// f(x) seen as a directional function constant over directions.
DirectionalSignal lift(const Signal& f, int n_theta);

// E*f: barycentric window sampling of a per-vertex signal; zero at invalid
// points.
WindowValues pull_back(const Signal& f, const WindowTensors& tensors);

// Window sampling of a directional signal: barycentric over supporting
// vertices and linear interpolation between the transported floor/ceil
// angular bins.
WindowValues dir_pull_back(const DirectionalSignal& phi,
                           const WindowTensors& tensors);

// Directional convolution: out[v, l, q] = sum_{i,j,p} dir_pull_back(phi)[v,i,j,p]
// * K[i, (j-l) mod N_theta, p, q] — the kernel circularly realigned to the
// queried direction.
DirectionalSignal dir_conv(const DirectionalSignal& phi, const PolarKernel& K,
                           const WindowTensors& tensors, ConvOptions opts = {});

// Max over the N_theta kernel rotations of the rotated-kernel response to a
// plain signal. Equals angular_max_pool(dir_conv(lift(f), K)).
Signal geodesic_conv(const Signal& f, const PolarKernel& K,
                     const WindowTensors& tensors, ConvOptions opts = {});

// Per-vertex, per-channel max over angular bins. Ties resolve to the lowest
// bin index; argmax (if requested) records the winning bin for gradient
// routing.
Signal angular_max_pool(const DirectionalSignal& phi,
                        std::vector<int>* argmax = nullptr);

// xi(dir_conv(phi, K) + phi*C + B), the central term applied per (vertex,
// direction).
DirectionalSignal dir_layer(const DirectionalSignal& phi,
                            const LayerParams& params,
                            const WindowTensors& tensors);

// max_l xi(rotation-l response + f*C + B) — the activation sits inside the
// max. argmax (if requested) records the winning rotation per (vertex,
// channel).
Signal gc_layer(const Signal& f, const LayerParams& params,
                const WindowTensors& tensors, std::vector<int>* argmax = nullptr);

// Stronger directional convolution: the transported-angle offset follows
// the queried direction l instead of the radial bin j, so on a flat mesh
// each angular bin evolves as an independent planar CNN with a rotated
// kernel.
DirectionalSignal dir_conv_fixed(const DirectionalSignal& phi,
                                 const PolarKernel& K,
                                 const WindowTensors& tensors);

} // namespace mdgc
