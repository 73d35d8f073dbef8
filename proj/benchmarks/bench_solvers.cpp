#include <benchmark/benchmark.h>

#include <cmath>

#include "vmsim/coupling.hpp"
#include "vmsim/maxwell_fdtd.hpp"
#include "vmsim/vlasov_transport.hpp"

using namespace vmsim;

namespace {

PhaseGrid slab(int nx, int nv) {
  const double h = 1.0 / nx;
  return PhaseGrid(FieldGrid{{nx + 2, 1, 1}, {h, h, h}, {false, true, true}}, CellBox{{1, 0, 0}, {nx + 1, 1, 1}}, nv,
                   4.0, GridMode::Slab1d3v);
}

Distribution maxwellian(const PhaseGrid& g) {
  Distribution f = Distribution::zeros(g);
  for (std::size_t s = 0; s < g.space_count(); ++s)
    for (std::size_t v = 0; v < g.velocity_count(); ++v) {
      const Vec3 p = g.velocity(v);
      f.at(g, s, v) = std::exp(-dot(p, p));
    }
  return f;
}

}  // namespace

static void BM_TransportStep(benchmark::State& state) {
  const PhaseGrid g = slab(64, static_cast<int>(state.range(0)));
  VlasovTransport tr(g, SpeciesParams{}, BoundarySpec::absorbing(0.5));
  Distribution f = maxwellian(g);
  ForceField F = ForceField::zeros(g.space_count());
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    F.E[s] = {0.1 * std::sin(0.1 * s), 0.0, 0.05};
    F.B[s] = {0.0, 0.2, 0.1};
  }
  const double dt = 0.5 * tr.stable_dt(&F);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tr.step(f, &F, dt));
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.size()));
}
BENCHMARK(BM_TransportStep)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_Moments(benchmark::State& state) {
  const PhaseGrid g = slab(64, static_cast<int>(state.range(0)));
  const std::vector<Distribution> f{maxwellian(g)};
  const std::vector<SpeciesParams> sp{SpeciesParams{}};
  for (auto _ : state) benchmark::DoNotOptimize(moments(g, f, sp));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.size()));
}
BENCHMARK(BM_Moments)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_MaxwellStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const double h = 1.0 / n;
  const FieldGrid g{{n, n, n}, {h, h, h}, {false, false, false}};
  const YeeMaterial mat =
      yee_material(MaterialField::from_regions(g, CellBox{{1, 1, 1}, {n - 1, n - 1, n - 1}}, {}, 1.0, 1.0));
  EmField fld = EmField::zeros(g);
  for (std::size_t i = 0; i < fld.E[1].size(); ++i) fld.E[1][i] = std::sin(0.01 * static_cast<double>(i));
  const StaggeredField j = staggered_zeros(g);
  const double dt = 0.5 * maxwell_stable_dt(mat);
  start_leapfrog(fld, mat, dt);
  for (auto _ : state) benchmark::DoNotOptimize(maxwell_step(fld, mat, j, dt));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.node_count()));
}
BENCHMARK(BM_MaxwellStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
