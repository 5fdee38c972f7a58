#include "tilq/bsde.hpp"
#include "tilq/meanvar.hpp"
#include "tilq/riccati.hpp"
#include "tilq/simulate.hpp"
#include "tilq/verification.hpp"

#include <benchmark/benchmark.h>

using namespace tilq;

namespace {

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

ProblemSpec lq_spec(std::size_t steps) {
    ConstantProblemData d;
    d.A = 0.05;
    d.B = vec1(0.1);
    d.C = vec1(-0.8);
    d.D = Eigen::MatrixXd::Constant(1, 1, 0.3);
    d.b = 0.1;
    d.sigma = vec1(0.2);
    d.Q = 0.5;
    d.R = Eigen::MatrixXd::Constant(1, 1, 0.05);
    d.G = 2.0;
    d.h = 1.0;
    d.mu1 = 0.5;
    d.mu2 = 0.3;
    return constant_problem(d, 1.0, steps);
}

MarketSpec ou_market(std::size_t steps) {
    MarketSpec m;
    m.r = ScalarPath::constant(0.0, 1.0);
    OUFactorPremium ou;
    ou.kappa = 1.0;
    ou.vol = 0.3;
    ou.theta_bar = vec1(0.5);
    ou.loading = vec1(0.3);
    m.premium = ou;
    m.mu1 = 4.0;
    m.mu2 = 0.5;
    m.grid = TimeGrid::uniform(1.0, steps);
    return finalize(std::move(m));
}

void BM_RiccatiSolve(benchmark::State& state) {
    const ProblemSpec spec = lq_spec(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(solve_riccati(spec));
}
BENCHMARK(BM_RiccatiSolve)->Arg(100)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_BsdeRegression(benchmark::State& state) {
    const MarketSpec m = ou_market(100);
    const FactorPaths f = simulate_factor(m.factor_model(), m.grid, static_cast<std::size_t>(state.range(0)), 7);
    for (auto _ : state) benchmark::DoNotOptimize(regression_solution(m, f, BasisSpec{3}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BsdeRegression)->Arg(10000)->Arg(40000)->Unit(benchmark::kMillisecond);

// One inner batch of the spike test: base and spiked bundles restarted at a node.
void BM_VerificationInnerLoop(benchmark::State& state) {
    const ProblemSpec spec = lq_spec(200);
    const RiccatiResult res = solve_riccati(spec);
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    ControlLaw base;
    base.feedback = AffineFeedback::from_lq(res.policy);
    const ControlLaw spiked = spike_control(base, spec.grid, 0.25, 0.05, vec1(1.0));
    SimOptions o;
    o.paths = static_cast<std::size_t>(state.range(0));
    o.antithetic = true;
    o.start_index = spec.grid.index_of(0.25);
    o.start_state = 1.0;
    for (auto _ : state) {
        const CostEstimate a = estimate_cost(simulate_state(sys, base, o), sys);
        const CostEstimate b = estimate_cost(simulate_state(sys, spiked, o), sys);
        benchmark::DoNotOptimize(b.value - a.value);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_VerificationInnerLoop)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
