#include "tilq/meanvar.hpp"

#include "tilq/errors.hpp"
#include "tilq/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace tilq {

namespace {

const DeterministicPremium& require_deterministic(const MarketSpec& market) {
    const auto* det = std::get_if<DeterministicPremium>(&market.premium);
    if (!det) throw AssumptionViolation("operation requires a deterministic risk premium");
    return *det;
}

numerics::HorizonExponential discount(const MarketSpec& market, double scale) {
    return numerics::HorizonExponential(market.grid, [&market](double t) { return market.r(t); }, scale);
}

}  // namespace

std::vector<double> rate_integral(const MarketSpec& market) {
    return numerics::integral_to_horizon(market.grid, [&](double t) { return market.r(t); });
}

std::vector<double> gamma1_path(const MarketSpec& market) {
    const auto R = rate_integral(market);
    std::vector<double> g(R.size());
    for (std::size_t i = 0; i < R.size(); ++i) g[i] = market.mu1 * std::exp(R[i]);
    g.back() = market.mu1;
    return g;
}

std::vector<double> gamma_path(const MarketSpec& market) {
    const auto R = rate_integral(market);
    std::vector<double> g(R.size());
    for (std::size_t i = 0; i < R.size(); ++i) g[i] = -market.mu2 * std::exp(R[i]);
    g.back() = -market.mu2;
    return g;
}

std::vector<double> det_premium_M(const MarketSpec& market) {
    const auto& det = require_deterministic(market);
    const TimeGrid& grid = market.grid;
    const auto inv = discount(market, -1.0);  // s -> exp(-int_s^T r)
    auto integrand = [&](double s) { return inv(s) * det.theta(s).squaredNorm(); };
    const auto R = rate_integral(market);
    std::vector<double> M(grid.size());
    double acc = 0.0;
    M.back() = 1.0;
    for (std::size_t i = grid.steps(); i-- > 0;) {
        acc += numerics::simpson(integrand, grid[i], grid[i + 1]);
        M[i] = std::exp(2.0 * R[i]) * (1.0 + market.mu1 * acc);
    }
    return M;
}

std::vector<double> det_premium_M_ode(const MarketSpec& market) {
    const auto& det = require_deterministic(market);
    const auto g1 = discount(market, 1.0);
    auto M = numerics::rk4_backward(market.grid, 1.0, [&](double t, double m) {
        return -(2.0 * market.r(t) * m + market.mu1 * g1(t) * det.theta(t).squaredNorm());
    });
    M.back() = 1.0;
    return M;
}

std::vector<double> det_premium_gamma2(const MarketSpec& market) {
    const auto& det = require_deterministic(market);
    const auto disc = discount(market, 1.0);
    auto g2 = numerics::rk4_backward(market.grid, -market.mu2, [&](double t, double g) {
        const double gamma = -market.mu2 * disc(t);
        return -(market.r(t) * g - det.theta(t).squaredNorm() * gamma);
    });
    g2.back() = -market.mu2;
    return g2;
}

MVAnsatzSolution det_premium_solution(const MarketSpec& market) {
    require_deterministic(market);
    MVAnsatzSolution s;
    s.grid = market.grid;
    s.deterministic = true;
    s.M = det_premium_M(market);
    s.U.assign(market.grid.size(), Eigen::VectorXd::Zero(market.noise_dim));
    s.Gamma1 = gamma1_path(market);
    s.Gamma = gamma_path(market);
    s.Gamma2 = det_premium_gamma2(market);
    s.gamma2.assign(market.grid.size(), Eigen::VectorXd::Zero(market.noise_dim));
    s.Gamma3.resize(s.Gamma2.size());
    for (std::size_t i = 0; i < s.Gamma2.size(); ++i) s.Gamma3[i] = s.Gamma2[i] - s.Gamma[i];
    s.Gamma3.back() = 0.0;
    return s;
}

MVPolicy det_premium_policy(const MarketSpec& market) {
    const auto& det = require_deterministic(market);
    const auto M = det_premium_M(market);
    const auto R = rate_integral(market);
    MVPolicy p;
    p.grid_ = market.grid;
    p.deterministic_ = true;
    p.d_ = market.noise_dim;
    for (std::size_t i = 0; i < M.size(); ++i) {
        const double t = market.grid[i];
        const Eigen::VectorXd theta = det.theta(t);
        const double w = std::exp(R[i]) / M[i];
        p.alpha_.push_back(market.mu1 * w * theta);
        p.beta_.push_back(market.mu2 * w * theta);
    }
    return p;
}

MVPolicy assemble_policy(const MarketSpec& market, const MVAnsatzSolution& sol) {
    MVPolicy p;
    p.grid_ = sol.grid;
    p.deterministic_ = sol.deterministic;
    p.d_ = market.noise_dim;
    static constexpr double test_states[] = {-2.0, -0.5, 0.0, 1.0, 3.0};

    if (sol.deterministic) {
        for (std::size_t i = 0; i < sol.grid.size(); ++i) {
            const Eigen::VectorXd theta = market.theta(sol.grid[i]);
            double M = sol.M[i];
            if (!(M > kMFloor)) {
                M = kMFloor;
                ++p.floored_;
            }
            Eigen::VectorXd a = (sol.Gamma1[i] * theta - sol.U[i]) / M;
            Eigen::VectorXd b = -(sol.Gamma[i] * theta + sol.gamma2[i]) / M;
            for (double x : test_states) {
                const Eigen::VectorXd direct =
                    -((sol.U[i] - theta * sol.Gamma1[i]) * x + sol.Gamma[i] * theta + sol.gamma2[i]) / M;
                p.identity_gap_ = std::max(p.identity_gap_, (direct - (a * x + b)).cwiseAbs().maxCoeff());
            }
            p.alpha_.push_back(std::move(a));
            p.beta_.push_back(std::move(b));
        }
        return p;
    }

    if (!sol.mu_regression || !sol.gamma2_regression) {
        throw std::invalid_argument("assemble_policy: stochastic solution lacks regression tables");
    }
    p.mu_ = sol.mu_regression;
    p.g2_ = sol.gamma2_regression;
    p.gamma1_ = sol.Gamma1;
    p.gamma_ = sol.Gamma;
    p.factor_ = market.factor_model();
    for (std::size_t i = 0; i < sol.grid.size(); ++i) {
        const auto& basis = p.mu_->steps[i].basis;
        for (double k : {-2.0, 0.0, 2.0}) {
            const double y = basis.center + k * basis.scale;
            const Eigen::VectorXd theta = p.factor_->theta(y);
            const double Mraw = p.mu_->value(i, y);
            if (!(Mraw > kMFloor)) ++p.floored_;
            const double M = std::max(Mraw, kMFloor);
            const Eigen::VectorXd U = p.mu_->z(i, y);
            const Eigen::VectorXd g2 = p.g2_->z(i, y);
            for (double x : test_states) {
                const Eigen::VectorXd direct = -((U - theta * p.gamma1_[i]) * x + p.gamma_[i] * theta + g2) / M;
                const Eigen::VectorXd via = p.alpha(i, y) * x + p.beta(i, y);
                p.identity_gap_ = std::max(p.identity_gap_, (direct - via).cwiseAbs().maxCoeff());
            }
        }
    }
    return p;
}

Eigen::VectorXd MVPolicy::alpha(std::size_t i, double factor) const {
    if (deterministic_) return detune_ * alpha_[i];
    const Eigen::VectorXd theta = factor_->theta(factor);
    const double M = std::max(mu_->value(i, factor), kMFloor);
    return detune_ * (gamma1_[i] * theta - mu_->z(i, factor)) / M;
}

Eigen::VectorXd MVPolicy::beta(std::size_t i, double factor) const {
    if (deterministic_) return beta_[i];
    const Eigen::VectorXd theta = factor_->theta(factor);
    const double M = std::max(mu_->value(i, factor), kMFloor);
    return -(gamma_[i] * theta + g2_->z(i, factor)) / M;
}

Eigen::VectorXd MVPolicy::control(std::size_t i, double x, double factor) const {
    return alpha(i, factor) * x + beta(i, factor);
}

MVPolicy MVPolicy::detuned(double factor) const {
    MVPolicy p = *this;
    p.detune_ *= factor;
    return p;
}

Eigen::VectorXd MVPolicy::to_weights(const MarketSpec& market, double t, const Eigen::VectorXd& u) {
    if (!market.volatility) throw ConfigError("asset weights need a volatility matrix in the market");
    const Eigen::MatrixXd sigma = (*market.volatility)(t);
    return sigma.transpose().partialPivLu().solve(u);
}

std::vector<double> wealth_representation(const MarketSpec& market, const MVPolicy& policy,
                                          const std::vector<Eigen::VectorXd>& increments) {
    const auto& det = require_deterministic(market);
    const TimeGrid& grid = market.grid;
    if (increments.size() != grid.steps()) throw std::invalid_argument("wealth_representation: one increment per step");
    std::vector<double> X(grid.size());
    double log_rho = 0.0;
    double drift_part = 0.0;
    double noise_part = 0.0;
    X[0] = market.x0;
    for (std::size_t i = 0; i < grid.steps(); ++i) {
        const double dt = grid.dt(i);
        const Eigen::VectorXd a = policy.alpha(i);
        const Eigen::VectorXd b = policy.beta(i);
        const Eigen::VectorXd dW_theta = increments[i] + det.theta(grid[i]) * dt;
        const double inv_rho = std::exp(-log_rho);
        drift_part += inv_rho * a.dot(b) * dt;
        noise_part += inv_rho * b.dot(dW_theta);
        log_rho += numerics::simpson([&](double t) { return market.r(t); }, grid[i], grid[i + 1]) + a.dot(dW_theta) -
                   0.5 * a.squaredNorm() * dt;
        X[i + 1] = std::exp(log_rho) * (market.x0 - drift_part + noise_part);
    }
    return X;
}

}  // namespace tilq
