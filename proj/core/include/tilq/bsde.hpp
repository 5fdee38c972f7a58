#pragma once

#include "tilq/meanvar.hpp"
#include "tilq/model.hpp"
#include "tilq/regression.hpp"
#include "tilq/time_grid.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace tilq {

enum class FactorScheme { exact_ou, euler };

/// Simulated factor paths together with the Brownian increments that drive
/// them (and, in the mean-variance setting, the wealth as well).
struct FactorPaths {
    TimeGrid grid;
    Eigen::MatrixXd Y;                          // paths x (steps + 1)
    std::vector<Eigen::MatrixXd> increments;    // per step: paths x d
    std::uint64_t seed = 0;
    FactorScheme scheme = FactorScheme::exact_ou;
    int factor_component = 0;
    bool antithetic = false;

    std::size_t paths() const { return static_cast<std::size_t>(Y.rows()); }
    int noise_dim() const { return increments.empty() ? 0 : static_cast<int>(increments.front().cols()); }
};

/// Exact Gaussian OU transitions, with the factor driven by increment
/// component `factor_component`. With `antithetic`, paths come in (+, -) pairs.
FactorPaths simulate_factor(const OUFactorPremium& model, const TimeGrid& grid, std::size_t paths,
                            std::uint64_t seed, int noise_dim = 1, bool antithetic = false);

struct IncrementCheck {
    bool evaluated = false;  // the gate runs only when paths * d >= 5000
    bool passed = true;
    double worst_mean = 0.0;      // max |sample mean| / (4 / sqrt(paths d))
    double worst_variance = 0.0;  // max |sample var / dt - 1|
};

/// Per-step sanity gate: sample mean within 4 / sqrt(paths d) of zero and
/// sample variance within 10% of dt.
IncrementCheck check_increments(const FactorPaths& factors);

struct BasisSpec {
    int degree = 3;
};

/// Backward regression scheme for
///   dM = -(2rM - U'theta + Gamma1|theta|^2 - |U|^2/M + Gamma1 U'theta/M) dt + U'dW, M_T = 1.
/// Throws NumericalError on an ill-conditioned basis or when more than 0.1%
/// of regression nodes needed the M floor.
RegressionBSDESolution solve_MU_regression(const MarketSpec& market, const FactorPaths& factors,
                                           const BasisSpec& basis = {});

/// Backward regression scheme for the linear BSDE
///   dG2 = -(r G2 - (theta + U/M)'g2 - (|theta|^2 + U'theta/M) Gamma) dt + g2'dW, G2_T = -mu2.
RegressionBSDESolution solve_gamma2_regression(const MarketSpec& market, const FactorPaths& factors,
                                               const RegressionBSDESolution& mu, const BasisSpec& basis = {});

/// Both regressions packaged as an ansatz solution (stochastic mode).
MVAnsatzSolution regression_solution(const MarketSpec& market, const FactorPaths& factors,
                                     const BasisSpec& basis = {});

/// Regressed value of step i averaged over the simulated factor values.
std::vector<double> mean_value_path(const RegressionBSDESolution& sol, const FactorPaths& factors);

/// sqrt(mean_i |zbar_i|^2) / sqrt(mean_i |se_i|^2): the RMS over steps of the
/// per-step mean integrand in units of its standard error.
double integrand_zero_score(const RegressionBSDESolution& sol);

}  // namespace tilq
