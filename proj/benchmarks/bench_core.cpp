#include <benchmark/benchmark.h>

#include <random>

#include "aggnash/cournot.hpp"
#include "aggnash/solver.hpp"

using namespace aggnash;

namespace {

const cournot::LargeInstance& network() {
  static const cournot::LargeInstance inst = cournot::build_network_instance(
      cournot::make_surrogate_graph(43, 51, 2024), {36, 19, 10, 5, 34}, 10.0, 1.5);
  return inst;
}

void project(benchmark::State& state, ProjectionMethod method) {
  const LocalSet& set = network().cournot.game.agent(0).local_set;
  std::mt19937_64 rng(1);
  std::vector<Eigen::VectorXd> points;
  for (int k = 0; k < 64; ++k) {
    Eigen::VectorXd z(set.dim());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = -1 + 4 * uniform01(rng);
    points.push_back(z);
  }
  std::size_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        project_polyhedron(points[k++ % points.size()], set, {.tol = 1e-10, .method = method}));
  }
}

void BM_ProjectDualNewton(benchmark::State& state) { project(state, ProjectionMethod::DualNewton); }
void BM_ProjectDykstra(benchmark::State& state) { project(state, ProjectionMethod::Dykstra); }

void BM_EvalF(benchmark::State& state) {
  const GameSpec& game = network().cournot.game;
  const CommMatrix ring = cournot::build_ring_comm(5);
  std::mt19937_64 rng(2);
  const StrategyProfile x = sample_profile(game, rng);
  const Rounds rounds(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(eval_F(game, ring, rounds, x));
}

void BM_SolverIterations(benchmark::State& state) {
  const GameSpec& game = network().cournot.game;
  const CommMatrix ring = cournot::build_ring_comm(5);
  SolverConfig cfg;
  cfg.tau = 0.05;
  cfg.nu = 10;
  cfg.stop_tol = 1e-300;
  cfg.max_iter = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(run_distributed(game, ring, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SmallSolve(benchmark::State& state) {
  const auto ex = cournot::build_small_example(false);
  SolverConfig cfg;
  cfg.stop_norm = StopNorm::Euclidean;
  for (auto _ : state) benchmark::DoNotOptimize(run_distributed(ex.cournot.game, ex.comm, cfg));
}

}  // namespace

BENCHMARK(BM_ProjectDualNewton);
BENCHMARK(BM_ProjectDykstra);
BENCHMARK(BM_EvalF)->Arg(2)->Arg(20);
BENCHMARK(BM_SolverIterations)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SmallSolve)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
