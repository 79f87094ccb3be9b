#include "lvot/acceleration.hpp"
#include "lvot/discretization.hpp"
#include "lvot/market_model.hpp"
#include "lvot/solvers.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

namespace {

using namespace lvot;

struct Problem {
  ReferenceMeasure ref;
  ConstraintSpec spec;
};

Problem make_problem(std::size_t n_points, std::size_t n_steps) {
  const std::vector<double> times{0.5, 1.0};
  const TimeGrid time = TimeGrid::uniform(1.0, n_steps, times);
  const double x0 = std::log(100.0);
  const double dx = 2.0 * 6.0 * 0.2 / static_cast<double>(n_points - 1);
  const SpaceGrid grid =
      SpaceGrid::uniform(x0 - static_cast<double>(n_points / 2) * dx, dx, n_points);
  Problem p{build_reference(time, grid,
                            Coefficients::martingale(std::vector<double>(n_steps, 0.2)), {x0, 0.0}),
            {}};
  StrikeRule rule;
  rule.counts = {3, 3};
  const InstrumentSet set = generate_market(SsviParams{}, 100.0, times, rule, 1e4);
  p.spec = ConstraintSpec::from_instruments(set, p.ref, 1e4);
  return p;
}

void BM_Sweep(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 4);
  SinkhornSolver solver(p.ref, p.spec);
  solver.sweep();
  for (auto _ : state) {
    solver.sweep();
    benchmark::DoNotOptimize(solver.potentials().phi_nu.back().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Sweep)->RangeMultiplier(2)->Range(100, 800)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oNSquared);

void BM_SweepSteps(benchmark::State& state) {
  const Problem p = make_problem(200, static_cast<std::size_t>(state.range(0)));
  SinkhornSolver solver(p.ref, p.spec);
  solver.sweep();
  for (auto _ : state) solver.sweep();
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SweepSteps)->Arg(2)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);

void BM_AndersonProposal(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  AndersonWindow window(5);
  for (int i = 0; i < 6; ++i) window.push(Eigen::VectorXd::Random(n), Eigen::VectorXd::Random(n));
  for (auto _ : state) benchmark::DoNotOptimize(window.propose(1e-10, true).x.data());
}
BENCHMARK(BM_AndersonProposal)->Arg(1000)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
