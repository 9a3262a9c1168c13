#include <benchmark/benchmark.h>

#include <random>

#include "mdgc/conv.hpp"
#include "mdgc/gpc.hpp"
#include "mdgc/meshgen.hpp"
#include "mdgc/windows.hpp"

using namespace mdgc;

namespace {

struct Fixture {
  TriangleMesh mesh;
  WindowTensors tensors;
  Fixture(int subdiv, int n_rho, int n_theta) {
    mesh = make_icosphere(subdiv);
    auto gpcs = compute_all_gpc(mesh, 0.5);
    tensors = build_windows(mesh, gpcs, {n_rho, n_theta, 0.33});
  }
};

DirectionalSignal random_dir_signal(int nv, int nth, int ch, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  DirectionalSignal s = DirectionalSignal::zeros(nv, nth, ch);
  for (double& x : s.a) x = dist(rng);
  return s;
}

PolarKernel random_kernel(int nr, int nth, int cin, int cout, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  PolarKernel k = PolarKernel::zeros(nr, nth, cin, cout);
  for (double& x : k.a) x = dist(rng);
  return k;
}

} // namespace

static void BM_dir_conv(benchmark::State& state) {
  const int nth = (int)state.range(0), ch = (int)state.range(1);
  Fixture fx(3, 2, nth);
  const auto phi = random_dir_signal(fx.mesh.n_vertices(), nth, ch, 7);
  const auto K = random_kernel(2, nth, ch, ch, 11);
  for (auto _ : state) {
    DirectionalSignal out = dir_conv(phi, K, fx.tensors);
    benchmark::DoNotOptimize(out.a.data());
  }
  state.counters["vertices"] = (double)fx.mesh.n_vertices();
}
BENCHMARK(BM_dir_conv)->Args({8, 8})->Args({8, 16})->Args({16, 16})->Unit(
    benchmark::kMillisecond);

static void BM_dir_pull_back(benchmark::State& state) {
  const int nth = (int)state.range(0), ch = (int)state.range(1);
  Fixture fx(3, 2, nth);
  const auto phi = random_dir_signal(fx.mesh.n_vertices(), nth, ch, 7);
  for (auto _ : state) {
    WindowValues pb = dir_pull_back(phi, fx.tensors);
    benchmark::DoNotOptimize(pb.a.data());
  }
}
BENCHMARK(BM_dir_pull_back)->Args({8, 8})->Args({16, 16})->Unit(
    benchmark::kMillisecond);

static void BM_dir_conv_fixed(benchmark::State& state) {
  const int nth = (int)state.range(0), ch = (int)state.range(1);
  Fixture fx(3, 2, nth);
  const auto phi = random_dir_signal(fx.mesh.n_vertices(), nth, ch, 7);
  const auto K = random_kernel(2, nth, ch, ch, 11);
  for (auto _ : state) {
    DirectionalSignal out = dir_conv_fixed(phi, K, fx.tensors);
    benchmark::DoNotOptimize(out.a.data());
  }
}
BENCHMARK(BM_dir_conv_fixed)->Args({8, 8})->Args({16, 16})->Unit(
    benchmark::kMillisecond);

BENCHMARK_MAIN();
