#include <benchmark/benchmark.h>

#include "mdgc/gpc.hpp"
#include "mdgc/meshgen.hpp"
#include "mdgc/windows.hpp"

using namespace mdgc;

static void BM_gpc_single(benchmark::State& state) {
  const TriangleMesh mesh = make_icosphere((int)state.range(0));
  const double r_max = state.range(1) / 100.0;
  for (auto _ : state) {
    GpcMap g = compute_gpc(mesh, 0, r_max);
    benchmark::DoNotOptimize(g.r.data());
  }
  state.counters["vertices"] = (double)mesh.n_vertices();
}
BENCHMARK(BM_gpc_single)
    ->Args({3, 30})
    ->Args({3, 60})
    ->Args({4, 30})
    ->Args({4, 60})
    ->Unit(benchmark::kMillisecond);

static void BM_gpc_all(benchmark::State& state) {
  const TriangleMesh mesh = make_icosphere((int)state.range(0));
  for (auto _ : state) {
    auto maps = compute_all_gpc(mesh, 0.5);
    benchmark::DoNotOptimize(maps.data());
  }
  state.counters["vertices"] = (double)mesh.n_vertices();
}
BENCHMARK(BM_gpc_all)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

static void BM_windows(benchmark::State& state) {
  const TriangleMesh mesh = make_icosphere(3);
  const auto gpcs = compute_all_gpc(mesh, 0.5);
  const WindowSpec spec{(int)state.range(0), (int)state.range(1), 0.33};
  for (auto _ : state) {
    WindowTensors t = build_windows(mesh, gpcs, spec);
    benchmark::DoNotOptimize(t.W.data());
  }
}
BENCHMARK(BM_windows)->Args({2, 8})->Args({2, 16})->Args({4, 16})->Unit(
    benchmark::kMillisecond);

BENCHMARK_MAIN();
