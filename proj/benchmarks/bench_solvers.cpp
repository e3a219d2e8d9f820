#include <cmath>
#include <memory>

#include <benchmark/benchmark.h>

#include "hsbe/collision.hpp"
#include "hsbe/homogeneous.hpp"
#include "hsbe/pipeline.hpp"
#include "hsbe/transport.hpp"

using namespace hsbe;

namespace {

CollisionParams params(int n_theta, int n_phi) {
  CollisionParams p;
  p.angular = AngularQuadrature::product(n_theta, n_phi);
  return p;
}

std::vector<double> bimodal(const VelocityGrid& g) {
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r2 = g.node(i).squaredNorm();
    f[i] = 0.5 * std::exp(-r2 / 1.4) + 0.5 * std::exp(-r2 / 2.6);
  }
  double mass = 0.0;
  for (double x : f) mass += x * g.cell_weight();
  for (double& x : f) x /= mass;
  return f;
}

void BM_Gain(benchmark::State& state) {
  const int n_v = static_cast<int>(state.range(0));
  const CollisionOperator op(VelocityGrid(4.5, n_v), params(4, 4));
  const auto f = bimodal(op.grid());
  for (auto _ : state) benchmark::DoNotOptimize(op.gain(f, f));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(op.grid().size()));
}
BENCHMARK(BM_Gain)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_HomogeneousStep(benchmark::State& state) {
  const int n_v = static_cast<int>(state.range(0));
  const CollisionOperator op(VelocityGrid(6.0, n_v), params(8, 16));
  const HomogeneousSolver solver(op);
  HomogeneousState s{bimodal(op.grid()), 0.0, true, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(solver.step(s, 0.01));
}
BENCHMARK(BM_HomogeneousStep)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_MildStep(benchmark::State& state) {
  const int lattice = static_cast<int>(state.range(0));
  const Domain domain = make_domain(std::make_shared<Ball>(), Axis{});
  const VelocityGrid vg(4.5, 8);
  const PhaseGrid grid(domain, vg, lattice);
  const CollisionOperator op(vg, params(4, 4));
  const TransportSolver solver(grid, op);
  const auto psi = neutral_profile(vg);
  Field f = grid.zeros();
  for (std::size_t x = 0; x < grid.spatial_size(); ++x) {
    const double s = std::max(0.0, 1.0 - grid.space().positions[x].squaredNorm());
    for (std::size_t v = 0; v < vg.size(); ++v) f(x, v) = 1e-3 * s * psi[v];
  }
  const auto bg = Background::constant(op.maxwellian());
  const InhomogeneousState st{f, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(solver.mild_step(st, bg, 0.02));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.size()));
}
BENCHMARK(BM_MildStep)->Arg(5)->Arg(7)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
