#include "fixtures.hpp"

#include "tilq/errors.hpp"
#include "tilq/meanvar.hpp"
#include "tilq/riccati.hpp"
#include "tilq/simulate.hpp"
#include "tilq/verification.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

using namespace tilq;
using namespace tilq::testing;

namespace {

ControlLaw law_of(AffineFeedback f) {
    ControlLaw law;
    law.feedback = std::move(f);
    return law;
}

SimOptions opts(std::size_t paths, std::uint64_t seed) {
    SimOptions o;
    o.paths = paths;
    o.seed = seed;
    return o;
}

double mean(const Eigen::VectorXd& v) { return v.mean(); }

double std_error(const Eigen::VectorXd& v) {
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Deterministic cost setting: sigma = D = 0, A = 0, Q = 0, G = h = 1, mu1 = 0, mu2 = 1.
ProblemSpec frozen_spec() {
    return constant_problem(scalar_data(0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0), 1.0, 50);
}

}  // namespace

TEST(SimulateState, NoDynamicsKeepsInitialWealth) {
    const MarketSpec m = det_market(0.0, vec1(0.4), 1.0, 0.0, 1.0, 50);
    const ControlledSystem sys = ControlledSystem::from_market(m);
    const PathBundle b = simulate_state(sys, law_of(AffineFeedback::constant(m.grid, vec1(0.0))), opts(200, 4));
    for (Eigen::Index p = 0; p < b.X.rows(); ++p) EXPECT_EQ(b.X(p, b.X.cols() - 1), 1.0);
}

TEST(SimulateState, LinearDriftIsExact) {
    const ProblemSpec quiet =
        constant_problem(scalar_data(0.1, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 1.0, 0.0, 0.0), 1.0, 100);
    const ControlledSystem qs = ControlledSystem::from_problem(quiet);
    const PathBundle q = simulate_state(qs, law_of(AffineFeedback::constant(quiet.grid, vec1(0.0))), opts(100, 2));
    for (Eigen::Index p = 0; p < q.X.rows(); ++p) EXPECT_NEAR(q.X(p, q.X.cols() - 1), std::exp(0.1), 1e-14);
    const MarketSpec m = det_market(0.1, vec1(0.3), 1.0, 0.0, 1.0, 100);
    const PathBundle w =
        simulate_state(ControlledSystem::from_market(m), law_of(AffineFeedback::constant(m.grid, vec1(0.0))), opts(100, 2));
    for (Eigen::Index p = 0; p < w.X.rows(); ++p) EXPECT_NEAR(w.X(p, w.X.cols() - 1), std::exp(0.1), 1e-14);
}

TEST(SimulateState, TerminalMeanMatchesRepresentation) {
    const MarketSpec m = det_market(0.03, vec1(0.2), 1.0, 0.5, 1.0, 500);
    const MVPolicy p = det_premium_policy(m);
    SimOptions o = opts(2000, 21);
    o.record_increments = true;
    const PathBundle b = simulate_state(ControlledSystem::from_market(m), law_of(AffineFeedback::from_mv(p)), o);
    Eigen::VectorXd rho(b.X.rows());
    for (Eigen::Index k = 0; k < b.X.rows(); ++k) {
        std::vector<Eigen::VectorXd> dW;
        for (const auto& inc : b.increments) dW.push_back(inc.row(k).transpose());
        rho[k] = wealth_representation(m, p, dW).back();
    }
    const Eigen::VectorXd XT = b.terminal();
    EXPECT_LE(std::abs(mean(XT) - mean(rho)), 3.0 * std_error(XT));
}

TEST(SimulateState, BlowUpReportsStep) {
    const ProblemSpec spec =
        constant_problem(scalar_data(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0), 1.0, 100);
    const AffineFeedback explode = AffineFeedback::linear(spec.grid, vec1(1e6), vec1(0.0));
    EXPECT_THROW(simulate_state(ControlledSystem::from_problem(spec), law_of(explode), opts(100, 1)), NumericalError);
}

TEST(EstimateCost, DeterministicDynamicsGiveMinusOne) {
    const ProblemSpec spec = frozen_spec();
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    const PathBundle b = simulate_state(sys, law_of(AffineFeedback::constant(spec.grid, vec1(0.0))), opts(100, 3));
    const CostEstimate c = estimate_cost(b, sys);
    EXPECT_EQ(c.value, -1.0);
    EXPECT_EQ(c.ci, 0.0);
    EXPECT_EQ(c.var_terminal, 0.0);
}

TEST(EstimateCost, DeterministicWealth) {
    const MarketSpec m = det_market(0.0, vec1(0.25), 1.0, 0.0, 1.0, 40);
    const ControlledSystem sys = ControlledSystem::from_market(m);
    const PathBundle b = simulate_state(sys, law_of(AffineFeedback::constant(m.grid, vec1(0.0))), opts(100, 5));
    const CostEstimate c = estimate_cost(b, sys);
    EXPECT_EQ(c.value, -1.0);
    EXPECT_EQ(c.ci, 0.0);
}

TEST(EstimateCost, ConstantControlGaussianWealth) {
    const MarketSpec m = det_market(0.0, vec1(0.0), 0.0, 0.0, 1.0, 50);
    const ControlledSystem sys = ControlledSystem::from_market(m);
    const PathBundle b = simulate_state(sys, law_of(AffineFeedback::constant(m.grid, vec1(0.3))), opts(20000, 8));
    const CostEstimate c = estimate_cost(b, sys);
    EXPECT_GT(c.ci, 0.0);
    EXPECT_LE(std::abs(c.value - 0.045), 3.0 * c.ci);
}

TEST(EstimateCost, RejectsSmallBundles) {
    const ProblemSpec spec = frozen_spec();
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    const PathBundle b = simulate_state(sys, law_of(AffineFeedback::constant(spec.grid, vec1(0.0))), opts(99, 3));
    EXPECT_ANY_THROW(estimate_cost(b, sys));
}

TEST(EstimateCost, ZeroVarianceOnDeterministicDynamics) {
    const ProblemSpec spec = frozen_spec();
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    const PathBundle b =
        simulate_state(sys, law_of(AffineFeedback::linear(spec.grid, vec1(-0.4), vec1(0.2))), opts(300, 9));
    const CostEstimate c = estimate_cost(b, sys);
    EXPECT_EQ(c.ci, 0.0);
    EXPECT_EQ(c.var_terminal, 0.0);
}

TEST(SpikeControl, ZeroDirectionReproducesBasePaths) {
    const ProblemSpec spec = nondegenerate_spec(100);
    const RiccatiResult res = solve_riccati(spec);
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    const ControlLaw base = law_of(AffineFeedback::from_lq(res.policy));
    for (SpikeMode mode : {SpikeMode::replay, SpikeMode::feedback}) {
        ControlLaw b = base;
        b.mode = mode;
        const ControlLaw spiked = spike_control(b, spec.grid, 0.3, 0.1, vec1(0.0));
        SimOptions o = opts(200, 12);
        o.record_increments = true;
        const PathBundle x0 = simulate_state(sys, b, o);
        const PathBundle x1 = simulate_state(sys, spiked, o);
        EXPECT_TRUE((x0.X.array() == x1.X.array()).all());
        EXPECT_TRUE((x0.running_cost.array() == x1.running_cost.array()).all());
    }
}

TEST(SpikeControl, SharesIncrementsWithBase) {
    const ProblemSpec spec = nondegenerate_spec(100);
    const RiccatiResult res = solve_riccati(spec);
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    const ControlLaw base = law_of(AffineFeedback::from_lq(res.policy));
    SimOptions o = opts(300, 13);
    o.record_increments = true;
    const PathBundle x0 = simulate_state(sys, base, o);
    const PathBundle x1 = simulate_state(sys, spike_control(base, spec.grid, 0.2, 0.1, vec1(1.0)), o);
    ASSERT_EQ(x0.increments.size(), x1.increments.size());
    for (std::size_t i = 0; i < x0.increments.size(); ++i) {
        EXPECT_TRUE((x0.increments[i].array() == x1.increments[i].array()).all());
    }
    EXPECT_FALSE((x0.X.array() == x1.X.array()).all());
}

TEST(SpikeControl, DisjointSpikesCommute) {
    const ProblemSpec spec = nondegenerate_spec(100);
    const RiccatiResult res = solve_riccati(spec);
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    for (SpikeMode mode : {SpikeMode::replay, SpikeMode::feedback}) {
        ControlLaw base = law_of(AffineFeedback::from_lq(res.policy));
        base.mode = mode;
        const ControlLaw ab =
            spike_control(spike_control(base, spec.grid, 0.1, 0.1, vec1(0.7)), spec.grid, 0.5, 0.1, vec1(-1.2));
        const ControlLaw ba =
            spike_control(spike_control(base, spec.grid, 0.5, 0.1, vec1(-1.2)), spec.grid, 0.1, 0.1, vec1(0.7));
        const PathBundle x = simulate_state(sys, ab, opts(200, 14));
        const PathBundle y = simulate_state(sys, ba, opts(200, 14));
        EXPECT_TRUE((x.X.array() == y.X.array()).all());
    }
}

TEST(SpikeControl, RejectsWindowPastHorizon) {
    const ProblemSpec spec = nondegenerate_spec(100);
    const ControlLaw base = law_of(AffineFeedback::constant(spec.grid, vec1(0.0)));
    EXPECT_THROW(spike_control(base, spec.grid, 0.95, 0.1, vec1(1.0)), std::invalid_argument);
    EXPECT_NO_THROW(spike_control(base, spec.grid, 0.9, 0.1, vec1(1.0)));
}

TEST(SpikeControl, ContinuityAtSmallWidth) {
    const ProblemSpec spec = nondegenerate_spec(10000);
    const RiccatiResult res = solve_riccati(spec);
    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    const ControlLaw base = law_of(AffineFeedback::from_lq(res.policy));
    const double eps = 1e-4;
    const SimOptions o = opts(1000, 15);
    const CostEstimate j0 = estimate_cost(simulate_state(sys, base, o), sys);
    const CostEstimate j1 = estimate_cost(simulate_state(sys, spike_control(base, spec.grid, 0.0, eps, vec1(1.0)), o), sys);
    const DiagonalModel diag = lq_diagonal(spec, res);
    Eigen::VectorXd lambda;
    Eigen::MatrixXd H;
    diag.eval(0, spec.x0, 0.0, lambda, H);
    const double bound = 10.0 * eps * (std::abs(lambda(0)) + H.norm());
    EXPECT_LE(std::abs(j1.value - j0.value), bound);
}

TEST(SimulateInvariants, AntitheticHalvesTerminalMeanVariance) {
    const MarketSpec m = det_market(0.03, vec1(0.3), 1.0, 0.5, 1.0, 100);
    const ControlledSystem sys = ControlledSystem::from_market(m);
    const ControlLaw law = law_of(AffineFeedback::from_mv(det_premium_policy(m)));
    SimOptions o = opts(20000, 31);
    const Eigen::VectorXd plain = simulate_state(sys, law, o).terminal();
    o.antithetic = true;
    const Eigen::VectorXd anti = simulate_state(sys, law, o).terminal();
    // paths come in (z, -z) pairs; the pair average is the effective sample
    const Eigen::Index half = anti.size() / 2;
    Eigen::VectorXd pairs(half);
    for (Eigen::Index k = 0; k < half; ++k) pairs[k] = 0.5 * (anti[2 * k] + anti[2 * k + 1]);
    const double var_plain = std_error(plain) * std_error(plain);
    const double var_anti = std_error(pairs) * std_error(pairs);
    EXPECT_LE(var_anti / var_plain, 0.75);
}

TEST(SimulateInvariants, WeakConvergenceUnderRefinement) {
    const ProblemSpec coarse = nondegenerate_spec(100);
    const ProblemSpec fine = nondegenerate_spec(200);
    const auto run = [](const ProblemSpec& s) {
        const RiccatiResult res = solve_riccati(s);
        return simulate_state(ControlledSystem::from_problem(s), law_of(AffineFeedback::from_lq(res.policy)),
                              opts(20000, 41))
            .terminal();
    };
    const Eigen::VectorXd a = run(coarse), b = run(fine);
    const double ci = kZ99 * std::hypot(std_error(a), std_error(b));
    EXPECT_LE(std::abs(mean(a) - mean(b)), 3.0 * ci);
}

TEST(SimulateInvariants, SeedDeterminism) {
    const MarketSpec m = ou_market(0.02, 1.0, 0.5, 1.0, 50);
    const ControlledSystem sys = ControlledSystem::from_market(m);
    const ControlLaw law = law_of(AffineFeedback::constant(m.grid, vec1(0.2)));
    const PathBundle a = simulate_state(sys, law, opts(300, 77));
    const PathBundle b = simulate_state(sys, law, opts(300, 77));
    const PathBundle c = simulate_state(sys, law, opts(300, 78));
    EXPECT_TRUE((a.X.array() == b.X.array()).all());
    EXPECT_TRUE((a.Y.array() == b.Y.array()).all());
    EXPECT_FALSE((a.X.array() == c.X.array()).all());
}

namespace {

VerifyConfig small_config(std::size_t paths) {
    VerifyConfig c;
    c.inner_paths = paths;
    c.seed = 5;
    c.compare_modes = false;
    return c;
}

}  // namespace

TEST(EquilibriumRatio, NullDirectionGivesZero) {
    const ProblemSpec spec = nondegenerate_spec(100);
    const RiccatiResult res = solve_riccati(spec);
    VerifyConfig c = small_config(500);
    c.directions = {ProbeDirection{vec1(0.0), false}};
    const VerificationReport r = equilibrium_ratio(ControlledSystem::from_problem(spec),
                                                   AffineFeedback::from_lq(res.policy), lq_diagonal(spec, res), c);
    ASSERT_EQ(r.probes.size(), 3u);
    for (const ProbeResult& p : r.probes) {
        for (double v : p.ratio) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(p.extrapolated, 0.0);
        EXPECT_EQ(p.verdict, Verdict::pass);
    }
}

TEST(EquilibriumRatio, ReportIsReproducible) {
    const MarketSpec m = det_market(0.03, vec1(0.3), 1.0, 0.5, 1.0, 50);
    const MVAnsatzSolution sol = det_premium_solution(m);
    const MVPolicy p = det_premium_policy(m);
    VerifyConfig c = small_config(1000);
    c.compare_modes = true;
    const auto run = [&] {
        return equilibrium_ratio(ControlledSystem::from_market(m), AffineFeedback::from_mv(p), mv_diagonal(m, sol, p), c);
    };
    const VerificationReport a = run(), b = run();
    ASSERT_EQ(a.probes.size(), b.probes.size());
    EXPECT_EQ(a.overall, b.overall);
    for (std::size_t k = 0; k < a.probes.size(); ++k) {
        EXPECT_EQ(a.probes[k].ratio, b.probes[k].ratio);
        EXPECT_EQ(a.probes[k].ratio_ci, b.probes[k].ratio_ci);
        EXPECT_EQ(a.probes[k].extrapolated, b.probes[k].extrapolated);
        EXPECT_EQ(a.probes[k].mode_gap, b.probes[k].mode_gap);
        EXPECT_EQ(a.probes[k].verdict, b.probes[k].verdict);
    }
}

TEST(EquilibriumRatio, ConfigChecks) {
    VerifyConfig c;
    c.epsilons = {0.1, 0.2};
    EXPECT_THROW(check_verify_config(c, 1.0), ConfigError);
    c.epsilons = {0.2, 0.1};
    c.probe_times = {0.9};
    EXPECT_THROW(check_verify_config(c, 1.0), ConfigError);
    c.probe_times = {0.8};
    EXPECT_NO_THROW(check_verify_config(c, 1.0));
    c.inner_paths = 50;
    EXPECT_THROW(check_verify_config(c, 1.0), ConfigError);
}

TEST(ExpansionCheck, ControlFreeStateGivesHalfR) {
    // B = D = 0: the control never reaches the state, so Delta J = eps R v^2 / 2.
    const double R = 2.0;
    const ProblemSpec spec =
        constant_problem(scalar_data(0.05, 0.0, 0.2, 0.0, 0.0, 0.1, 0.5, R, 2.0, 1.0, 0.5, 0.2), 1.0, 100);
    const RiccatiResult res = solve_riccati(spec);
    const VerificationReport r = equilibrium_ratio(ControlledSystem::from_problem(spec),
                                                   AffineFeedback::from_lq(res.policy), lq_diagonal(spec, res),
                                                   small_config(200));
    const ExpansionReport e = expansion_check(r);
    ASSERT_EQ(e.probes.size(), r.probes.size());
    for (std::size_t k = 0; k < r.probes.size(); ++k) {
        const double v = r.probes[k].v(0);
        EXPECT_NEAR(e.probes[k].predicted, 0.5 * R * v * v, 1e-12);
        EXPECT_NEAR(e.probes[k].slope, 0.5 * R * v * v, 1e-9 * (1.0 + v * v));
        // the o(eps) remainder is identically zero here, up to rounding
        for (double rem : e.probes[k].remainder) EXPECT_LE(rem, 1e-12);
    }
}

TEST(ExpansionCheck, EquilibriumSlopeMatchesHessian) {
    const ProblemSpec spec = proportional_spec(100);
    const RiccatiResult res = solve_riccati(spec);
    VerifyConfig c = small_config(20000);
    c.probe_times = {0.0, 0.25};
    const VerificationReport r = equilibrium_ratio(ControlledSystem::from_problem(spec),
                                                   AffineFeedback::from_lq(res.policy), lq_diagonal(spec, res), c);
    const ExpansionReport e = expansion_check(r);
    EXPECT_TRUE(e.passed);
    for (std::size_t k = 0; k < r.probes.size(); ++k) {
        const double v = r.probes[k].v(0);
        EXPECT_NEAR(r.probes[k].predicted_first, 0.0, 1e-9);
        EXPECT_NEAR(e.probes[k].predicted, 0.5 * hessian_weight(spec, r.probes[k].t)(0, 0) * v * v, 1e-12);
        EXPECT_GE(e.probes[k].predicted, 0.0);
    }
}

TEST(LambdaResidual, DiagonalVanishes) {
    const ProblemSpec spec = nondegenerate_spec(200);
    const RiccatiResult res = solve_riccati(spec);
    SimOptions o = opts(2000, 51);
    o.start_index = 50;
    o.start_state = 1.3;
    const PathBundle b =
        simulate_state(ControlledSystem::from_problem(spec), law_of(AffineFeedback::from_lq(res.policy)), o);
    const LambdaResidual l = lambda_residual(spec, res.solution, b);
    EXPECT_EQ(l.diagonal_max, 0.0);
    EXPECT_EQ(l.mean_norm.front(), 0.0);
    EXPECT_EQ(l.times.front(), spec.grid[50]);
    EXPECT_GT(l.mean_norm.back(), 0.0);
}

TEST(LambdaResidual, VanishesWithoutControlLoading) {
    const ProblemSpec spec =
        constant_problem(scalar_data(0.05, 0.0, 0.2, 0.5, 0.1, 0.1, 0.5, 1.0, 2.0, 1.0, 0.5, 0.2), 1.0, 100);
    const RiccatiResult res = solve_riccati(spec);
    const PathBundle b = simulate_state(ControlledSystem::from_problem(spec),
                                        law_of(AffineFeedback::from_lq(res.policy)), opts(500, 52));
    const LambdaResidual l = lambda_residual(spec, res.solution, b);
    for (double v : l.mean_norm) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(l.diagonal_max, 0.0);
}
