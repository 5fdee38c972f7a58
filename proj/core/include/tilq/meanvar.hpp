#pragma once

#include "tilq/model.hpp"
#include "tilq/regression.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <vector>

namespace tilq {

/// Floor applied to M whenever the policy divides by it.
inline constexpr double kMFloor = 1e-6;

/// Ansatz processes of the mean-variance equilibrium. In deterministic mode
/// the paths below are exact node values; in stochastic mode M, U and
/// gamma2 are regression representations in the factor and the node paths
/// hold only the deterministic members (Gamma1, Gamma).
struct MVAnsatzSolution {
    TimeGrid grid;
    bool deterministic = true;
    std::vector<double> M;
    std::vector<Eigen::VectorXd> U;
    std::vector<double> Gamma1;
    std::vector<double> Gamma;
    std::vector<double> Gamma2;
    std::vector<Eigen::VectorXd> gamma2;
    std::vector<double> Gamma3;
    std::shared_ptr<const RegressionBSDESolution> mu_regression;
    std::shared_ptr<const RegressionBSDESolution> gamma2_regression;
};

/// u = alpha X + beta in u = sigma' pi coordinates. Deterministic mode keeps
/// node vectors; stochastic mode evaluates through the regression tables.
class MVPolicy {
public:
    MVPolicy() = default;

    const TimeGrid& grid() const { return grid_; }
    bool deterministic() const { return deterministic_; }
    int noise_dim() const { return d_; }

    Eigen::VectorXd alpha(std::size_t i, double factor = 0.0) const;
    Eigen::VectorXd beta(std::size_t i, double factor = 0.0) const;
    Eigen::VectorXd control(std::size_t i, double x, double factor = 0.0) const;

    /// Node paths (deterministic mode only).
    const std::vector<Eigen::VectorXd>& alpha_path() const { return alpha_; }
    const std::vector<Eigen::VectorXd>& beta_path() const { return beta_; }

    /// Scales the feedback coefficient alpha by `factor` (negative-control runs).
    MVPolicy detuned(double factor) const;

    /// Largest deviation from -M^{-1}[(U - theta Gamma1) x + Gamma theta + gamma2]
    /// found while assembling.
    double identity_gap() const { return identity_gap_; }
    std::size_t floored_divisions() const { return floored_; }

    /// pi = (sigma')^{-1} u; requires a volatility matrix in the market.
    static Eigen::VectorXd to_weights(const MarketSpec& market, double t, const Eigen::VectorXd& u);

private:
    friend MVPolicy det_premium_policy(const MarketSpec&);
    friend MVPolicy assemble_policy(const MarketSpec&, const MVAnsatzSolution&);

    TimeGrid grid_;
    bool deterministic_ = true;
    int d_ = 1;
    std::vector<Eigen::VectorXd> alpha_;
    std::vector<Eigen::VectorXd> beta_;
    double detune_ = 1.0;
    // stochastic mode
    std::shared_ptr<const RegressionBSDESolution> mu_;
    std::shared_ptr<const RegressionBSDESolution> g2_;
    std::vector<double> gamma1_;
    std::vector<double> gamma_;
    std::optional<OUFactorPremium> factor_;
    double identity_gap_ = 0.0;
    std::size_t floored_ = 0;
};

/// int_t^T r on the grid.
std::vector<double> rate_integral(const MarketSpec& market);

/// Gamma1_t = mu1 exp(int_t^T r).
std::vector<double> gamma1_path(const MarketSpec& market);

/// Gamma_t = -mu2 exp(int_t^T r).
std::vector<double> gamma_path(const MarketSpec& market);

/// M_t = exp(2 int_t^T r) (1 + mu1 int_t^T exp(-int_s^T r) |theta_s|^2 ds).
std::vector<double> det_premium_M(const MarketSpec& market);

/// Same M from the backward ODE dM/dt = -(2 r M + Gamma1 |theta|^2), M_T = 1.
std::vector<double> det_premium_M_ode(const MarketSpec& market);

/// Gamma2 for a deterministic premium: dGamma2/dt = -(r Gamma2 - |theta|^2 Gamma),
/// Gamma2_T = -mu2, integrated by RK4.
std::vector<double> det_premium_gamma2(const MarketSpec& market);

/// alpha = mu1 e^{int r} theta / M, beta = mu2 e^{int r} theta / M.
MVPolicy det_premium_policy(const MarketSpec& market);

/// Complete deterministic-premium ansatz solution (U = 0, gamma2 = 0).
MVAnsatzSolution det_premium_solution(const MarketSpec& market);

/// alpha = (Gamma1 theta - U) / M, beta = -(Gamma theta + gamma2) / M, with
/// the equilibrium identity checked on a set of test states.
MVPolicy assemble_policy(const MarketSpec& market, const MVAnsatzSolution& sol);

/// X_t = rho_t (x0 - int rho^{-1} alpha'beta ds + int rho^{-1} beta dW^theta),
/// rho_t = e^{int_0^t r} E_t(alpha . W^theta), W^theta = W + int theta.
/// `increments` holds one Brownian increment (length d) per grid step.
std::vector<double> wealth_representation(const MarketSpec& market, const MVPolicy& policy,
                                          const std::vector<Eigen::VectorXd>& increments);

}  // namespace tilq
