#pragma once

#include "tilq/meanvar.hpp"
#include "tilq/model.hpp"
#include "tilq/riccati.hpp"
#include "tilq/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tilq {

struct ProbeDirection {
    Eigen::VectorXd v;
    bool state_scaled = false;  // effective direction is X*_t v
};

/// +e_k, -e_k, +X e_k, -X e_k for every control component k.
std::vector<ProbeDirection> default_directions(int control_dim);

struct VerifyConfig {
    std::vector<double> epsilons = {0.2, 0.1, 0.05};  // fractions of T, strictly decreasing
    std::vector<double> probe_times;                  // absolute; empty means {0, T/4, T/2}
    std::vector<ProbeDirection> directions;           // empty means default_directions
    std::size_t inner_paths = 100000;
    std::uint64_t seed = 1;
    bool antithetic = true;
    SpikeMode mode = SpikeMode::replay;
    bool compare_modes = true;     // also run the other continuation at the smallest epsilon
    double tolerance = 1e-6;       // slack in the inconclusive rule
};

/// Throws ConfigError on an invalid ladder or probe grid.
void check_verify_config(const VerifyConfig& config, double horizon);

/// Lambda(t;t) of the policy under test and the Hessian weight H(t), at grid
/// node i for state x and factor y.
struct DiagonalModel {
    std::function<void(std::size_t i, double x, double y, Eigen::VectorXd& lambda, Eigen::MatrixXd& H)> eval;
};

/// (R + M D'D) u + (M - N - Gamma1) B x + M D'C x + Phi B + M D'sigma with
/// u = detune * alpha x + beta, and H = R + P D'D.
DiagonalModel lq_diagonal(const ProblemSpec& spec, const RiccatiResult& result, double detune = 1.0);

/// (Gamma - Gamma1 x) theta + x U + M u + gamma2 with u from `policy`
/// (possibly detuned), and H = exp(2 int_t^T r) I.
DiagonalModel mv_diagonal(const MarketSpec& market, const MVAnsatzSolution& sol, const MVPolicy& policy);

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);

struct ProbeResult {
    double t = 0.0;
    std::size_t node = 0;
    std::size_t direction = 0;
    Eigen::VectorXd v;      // effective direction
    double x_t = 0.0;
    double y_t = 0.0;
    std::vector<double> epsilons;   // realised window lengths
    std::vector<double> delta_J;
    std::vector<double> delta_J_ci;
    std::vector<double> ratio;
    std::vector<double> ratio_ci;
    double extrapolated = 0.0;
    double extrapolated_ci = 0.0;
    double predicted_first = 0.0;
    double predicted_second = 0.0;
    double mode_gap = 0.0;  // |ratio(replay) - ratio(feedback)| at the smallest epsilon
    Verdict verdict = Verdict::pass;
};

struct VerificationReport {
    std::vector<ProbeResult> probes;
    Verdict overall = Verdict::pass;
    std::size_t inner_paths = 0;
    SpikeMode mode = SpikeMode::replay;

    std::size_t count(Verdict v) const;
};

/// Spike-variation test: for each probe time one outer path fixes X*_t, then
/// inner paths restarted at (t, X*_t) estimate J(u^{t,eps,v}) - J(u*) with
/// common random numbers, divided by eps, and extrapolated to eps -> 0.
VerificationReport equilibrium_ratio(const ControlledSystem& system, const AffineFeedback& policy,
                                     const DiagonalModel& diagonal, const VerifyConfig& config);

struct ExpansionProbe {
    std::size_t probe = 0;
    double slope = 0.0;          // extrapolated Delta J / eps
    double slope_ci = 0.0;
    double predicted = 0.0;      // <Lambda, v> + 1/2 <H v, v>
    bool slope_ok = false;
    std::vector<double> remainder;     // |Delta J(eps) - eps * predicted|
    std::vector<double> remainder_ci;
    std::vector<double> decay_ratio;   // remainder(eps_k) / remainder(eps_{k+1})
    bool decay_ok = false;
};

struct ExpansionReport {
    std::vector<ExpansionProbe> probes;
    bool passed = false;
};

/// Compares the measured Delta J(eps) with eps (<Lambda, v> + 1/2 <Hv, v>):
/// the extrapolated slope must match within 3 CI and the remainder must
/// shrink by at least 1.5 per halving, allowing 3 CI on each side.
ExpansionReport expansion_check(const VerificationReport& report);

ExpansionReport expansion_check(const ControlledSystem& system, const AffineFeedback& policy,
                                const DiagonalModel& diagonal, const VerifyConfig& config);

struct LambdaResidual {
    std::vector<double> times;
    std::vector<double> mean_norm;   // |E_t Lambda(s;t)| per node s >= t
    double diagonal_max = 0.0;       // max over paths of |Lambda(t;t)|
};

/// Lambda(s;t) = N_s (X_s - E_t X_s) B_s + Gamma1_s (X_s - X_t) B_s evaluated on
/// a bundle restarted at t. E_t X_s uses x_ref + mean(X_s - x_ref) so the
/// diagonal vanishes exactly.
LambdaResidual lambda_residual(const ProblemSpec& spec, const RiccatiSolution& sol, const PathBundle& bundle);

struct LambdaDecay {
    std::vector<double> deltas;
    std::vector<double> values;
    double exponent = 0.0;
    double diagonal_max = 0.0;
};

/// Log-log slope of |E_t Lambda(t + Delta; t)| over Delta = k steps.
LambdaDecay lambda_decay(const ProblemSpec& spec, const RiccatiResult& result, double t,
                         const std::vector<std::size_t>& ladder_steps, std::size_t paths, std::uint64_t seed);

}  // namespace tilq
