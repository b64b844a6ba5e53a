// Serial reference vs OpenMP kernels on a uniform block; threads follow SGLD_THREADS.
#include "infill/fem.hpp"
#include "infill/kernels.hpp"
#include "infill/rasterize.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace infill;

namespace {

struct Block {
  Grid grid;
  std::vector<double> Ke, modulus, u, y;
  std::vector<std::uint8_t> mask;

  explicit Block(int n) {
    grid.nx = grid.ny = grid.nz = n;
    const auto K = generic_element_stiffness(1.0, 0.3, 1.0).K;
    Ke.assign(K.data(), K.data() + 576);
    modulus.assign(grid.num_elements(), 1.0);
    mask.assign(grid.num_elements(), 1);
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> U(-1, 1);
    u.resize(3 * grid.num_nodes());
    for (auto& v : u) v = U(rng);
    y.assign(u.size(), 0.0);
  }
};

template <auto Kernel>
void BM_Stiffness(benchmark::State& state) {
  Block b(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    std::fill(b.y.begin(), b.y.end(), 0.0);
    Kernel(b.grid, b.Ke, b.modulus, b.u, b.y);
    benchmark::DoNotOptimize(b.y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.grid.num_elements()));
}

template <auto Kernel>
void BM_Filter(benchmark::State& state) {
  Block b(static_cast<int>(state.range(0)));
  const auto st = kernels::conic_stencil(1.5);
  std::vector<double> x(b.grid.num_elements(), 0.3), out(x.size());
  for (auto _ : state) {
    Kernel(b.grid, st, b.mask, x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.grid.num_elements()));
}

template <auto Kernel>
void BM_Energy(benchmark::State& state) {
  Block b(static_cast<int>(state.range(0)));
  std::vector<double> out(b.grid.num_elements());
  for (auto _ : state) {
    Kernel(b.grid, b.Ke, b.mask, b.u, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.grid.num_elements()));
}

void BM_Solve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto d = make_block_domain(n, n, n, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, n + 0.1, n + 0.1)));
  d = apply_load(d, RegionSelector::box(Vec3(n - 0.1, -0.1, -0.1), Vec3(n + 0.1, n + 0.1, 0.1)), Vec3(0, 0, -1));
  const Material mat;
  const auto prob = make_problem(d, element_moduli(d, std::vector<double>(d.labels.size(), 1.0), mat), mat);
  const auto f = force_vector(d, prob);
  SolverConfig sc;
  int iters = 0;
  for (auto _ : state) {
    const auto r = solve(prob, f, sc);
    iters = r.iterations;
    benchmark::DoNotOptimize(r.u.data());
  }
  state.counters["cg_iterations"] = iters;
}

void BM_VoxelizeGraph(benchmark::State& state) {
  auto d = make_block_domain(64, 64, 64, 1.0);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0, 64);
  EdgeGraph g;
  for (int i = 0; i < 4000; ++i) {
    const auto a = g.add_node(Vec3(U(rng), U(rng), U(rng)));
    const auto b = g.add_node(Vec3(U(rng), U(rng), U(rng)));
    g.add_edge(a, b);
  }
  for (auto _ : state) benchmark::DoNotOptimize(voxelize_graph(g, d, 1).occupied.data());
}

}  // namespace

BENCHMARK(BM_Stiffness<kernels::serial::apply_uniform_stiffness>)->Name("stiffness/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_Stiffness<kernels::parallel::apply_uniform_stiffness>)->Name("stiffness/parallel")->Arg(32)->Arg(64);
BENCHMARK(BM_Filter<kernels::serial::stencil_average>)->Name("filter/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_Filter<kernels::parallel::stencil_average>)->Name("filter/parallel")->Arg(32)->Arg(64);
BENCHMARK(BM_Energy<kernels::serial::element_energy>)->Name("energy/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_Energy<kernels::parallel::element_energy>)->Name("energy/parallel")->Arg(32)->Arg(64);
BENCHMARK(BM_Solve)->Name("mgcg/solve")->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VoxelizeGraph)->Name("rasterize/graph")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
