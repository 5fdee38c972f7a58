#include "tilq/bsde.hpp"

#include "tilq/errors.hpp"
#include "tilq/parallel.hpp"
#include "tilq/random.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>

namespace tilq {

FactorPaths simulate_factor(const OUFactorPremium& model, const TimeGrid& grid, std::size_t paths,
                            std::uint64_t seed, int noise_dim, bool antithetic) {
    if (model.kappa < 0.0 || model.vol < 0.0) throw AssumptionViolation("OU factor needs kappa >= 0 and vol >= 0");
    if (noise_dim < 1 || model.factor_component < 0 || model.factor_component >= noise_dim) {
        throw ConfigError("factor component outside the noise dimension");
    }
    if (paths == 0) throw ConfigError("need at least one path");
    if (antithetic && paths % 2 != 0) ++paths;
    const std::size_t steps = grid.steps();
    FactorPaths f;
    f.grid = grid;
    f.seed = seed;
    f.scheme = FactorScheme::exact_ou;
    f.factor_component = model.factor_component;
    f.antithetic = antithetic;
    f.Y.resize(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(steps + 1));
    f.increments.assign(steps, Eigen::MatrixXd(static_cast<Eigen::Index>(paths), noise_dim));

    std::vector<double> decay(steps), spread(steps), root_dt(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double dt = grid.dt(i);
        root_dt[i] = std::sqrt(dt);
        decay[i] = std::exp(-model.kappa * dt);
        const double var = model.kappa > 0.0 ? (1.0 - std::exp(-2.0 * model.kappa * dt)) / (2.0 * model.kappa) : dt;
        spread[i] = model.vol * std::sqrt(var);
    }
    const std::size_t draws = antithetic ? paths / 2 : paths;
    const int k = model.factor_component;
    parallel_blocks(draws, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> z(steps * static_cast<std::size_t>(noise_dim));
        for (std::size_t j = lo; j < hi; ++j) {
            auto engine = make_engine(seed, Stream::factor, j);
            fill_normals(engine, z);
            const int copies = antithetic ? 2 : 1;
            for (int c = 0; c < copies; ++c) {
                const double sign = c == 0 ? 1.0 : -1.0;
                const auto p = static_cast<Eigen::Index>(antithetic ? 2 * j + static_cast<std::size_t>(c) : j);
                double y = model.y0;
                f.Y(p, 0) = y;
                for (std::size_t i = 0; i < steps; ++i) {
                    for (int q = 0; q < noise_dim; ++q) {
                        f.increments[i](p, q) = sign * root_dt[i] * z[i * static_cast<std::size_t>(noise_dim) + static_cast<std::size_t>(q)];
                    }
                    const double zk = f.increments[i](p, k) / root_dt[i];
                    y = model.mean + (y - model.mean) * decay[i] + spread[i] * zk;
                    f.Y(p, static_cast<Eigen::Index>(i + 1)) = y;
                }
            }
        }
    });
    return f;
}

IncrementCheck check_increments(const FactorPaths& factors) {
    IncrementCheck c;
    const auto n = static_cast<double>(factors.paths());
    const int d = factors.noise_dim();
    if (n * d < 5000.0) return c;
    c.evaluated = true;
    const double bound = 4.0 / std::sqrt(n * d);
    for (std::size_t i = 0; i < factors.increments.size(); ++i) {
        const auto& inc = factors.increments[i];
        const double dt = factors.grid.dt(i);
        const double sd = std::sqrt(dt);
        const double mean = inc.mean() / sd;
        const double var = inc.array().square().mean() - inc.mean() * inc.mean();
        c.worst_mean = std::max(c.worst_mean, std::abs(mean) / bound);
        c.worst_variance = std::max(c.worst_variance, std::abs(var / dt - 1.0));
    }
    c.passed = c.worst_mean <= 1.0 && c.worst_variance <= 0.1;
    return c;
}

namespace {

Eigen::VectorXd pad(const Eigen::VectorXd& coef, int size) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(size);
    out.head(coef.size()) = coef;
    return out;
}

Eigen::MatrixXd pad_rows(const Eigen::MatrixXd& coef, int size) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size, coef.cols());
    out.topRows(coef.rows()) = coef;
    return out;
}

StepFit terminal_fit(double value, int degree, int d) {
    StepFit s;
    s.basis.degree = degree;
    s.basis.intercept_only = true;
    s.value_coef = Eigen::VectorXd::Zero(degree + 1);
    s.value_coef[0] = value;
    s.z_coef = Eigen::MatrixXd::Zero(degree + 1, d);
    s.z_mean = Eigen::VectorXd::Zero(d);
    s.z_stderr = Eigen::VectorXd::Zero(d);
    return s;
}

/// Theta at node i for every path, as a paths x d matrix.
Eigen::MatrixXd theta_matrix(const MarketSpec& market, double t, const Eigen::VectorXd& y) {
    const int d = market.noise_dim;
    Eigen::MatrixXd th(y.size(), d);
    if (market.deterministic_premium()) {
        const Eigen::RowVectorXd row = market.theta(t).transpose();
        th.rowwise() = row;
    } else {
        const auto& ou = market.factor_model();
        for (Eigen::Index p = 0; p < y.size(); ++p) th.row(p) = ou.theta(y[p]).transpose();
    }
    return th;
}

/// Shared backward step: conditional expectation of `next`, the martingale
/// integrand and its diagnostics.
struct ProjectionStep {
    PolyBasis basis;
    Eigen::MatrixXd X;
    Eigen::VectorXd pred;
    Eigen::MatrixXd z_hat;
    StepFit fit;
};

ProjectionStep project(const Eigen::VectorXd& y, const Eigen::VectorXd& next, const Eigen::MatrixXd& dW, double dt,
                       int degree) {
    ProjectionStep s;
    s.basis = PolyBasis::fit(y, degree);
    s.X = design_matrix(s.basis, y);
    const LeastSquaresFit cond = least_squares(s.X, next);
    s.pred = s.X * cond.coef.col(0);
    const Eigen::VectorXd dev = next - s.pred;
    Eigen::MatrixXd target = dW.array().colwise() * (dev.array() / dt);
    const LeastSquaresFit zfit = least_squares(s.X, target);
    s.z_hat = s.X * zfit.coef;
    const auto n = static_cast<double>(y.size());
    s.fit.basis = s.basis;
    s.fit.z_coef = pad_rows(zfit.coef, degree + 1);
    s.fit.z_mean = target.colwise().mean().transpose();
    const Eigen::RowVectorXd mean = s.fit.z_mean.transpose();
    const Eigen::MatrixXd centred = target.rowwise() - mean;
    s.fit.z_stderr = (centred.colwise().squaredNorm() / std::max(1.0, n - 1.0)).cwiseSqrt().transpose() / std::sqrt(n);
    s.fit.z_residual_rms = zfit.residual_rms.mean();
    s.fit.condition = std::max(cond.condition, zfit.condition);
    return s;
}

}  // namespace

RegressionBSDESolution solve_MU_regression(const MarketSpec& market, const FactorPaths& factors,
                                           const BasisSpec& basis) {
    const TimeGrid& grid = factors.grid;
    const int d = market.noise_dim;
    if (factors.noise_dim() != d) throw ConfigError("factor increments do not match the noise dimension");
    if (grid.steps() != market.grid.steps()) throw ConfigError("factor grid does not match the market grid");
    if (basis.degree < 0) throw ConfigError("basis degree must be non-negative");
    const auto gamma1 = gamma1_path(market);
    const std::size_t n = grid.steps();
    const auto N = static_cast<Eigen::Index>(factors.paths());

    RegressionBSDESolution sol;
    sol.degree = basis.degree;
    sol.noise_dim = d;
    sol.steps.resize(n + 1);
    sol.steps[n] = terminal_fit(1.0, basis.degree, d);

    Eigen::VectorXd current = Eigen::VectorXd::Ones(N);
    for (std::size_t i = n; i-- > 0;) {
        const double t = grid[i];
        const double dt = grid.dt(i);
        const Eigen::VectorXd y = factors.Y.col(static_cast<Eigen::Index>(i));
        ProjectionStep step = project(y, current, factors.increments[i], dt, basis.degree);
        const Eigen::MatrixXd theta = theta_matrix(market, t, y);
        const double r = market.r(t);
        const double g1 = gamma1[i];

        auto driver = [&](const Eigen::VectorXd& M) {
            Eigen::VectorXd f(N);
            for (Eigen::Index p = 0; p < N; ++p) {
                const double m = std::max(M[p], kMFloor);
                const auto U = step.z_hat.row(p);
                const auto th = theta.row(p);
                const double ut = U.dot(th);
                f[p] = 2.0 * r * M[p] - ut + g1 * th.squaredNorm() - U.squaredNorm() / m + g1 * ut / m;
            }
            return f;
        };

        Eigen::VectorXd guess = current;
        LeastSquaresFit vfit;
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd target = current + dt * driver(guess);
            vfit = least_squares(step.X, target);
            guess = step.X * vfit.coef.col(0);
        }
        sol.picard_passes += 1;

        for (Eigen::Index p = 0; p < N; ++p) {
            if (guess[p] <= kMFloor) ++sol.floored;
        }
        sol.nodes_total += static_cast<std::size_t>(N);

        StepFit& fit = step.fit;
        fit.value_coef = pad(vfit.coef.col(0), basis.degree + 1);
        fit.value_residual_rms = vfit.residual_rms[0];
        fit.condition = std::max(fit.condition, vfit.condition);
        sol.steps[i] = std::move(fit);
        current = guess;
    }
    if (sol.floored_fraction() > 1e-3) {
        throw NumericalError("positivity audit failed: M floored on " + std::to_string(sol.floored) + " of " +
                             std::to_string(sol.nodes_total) + " regression nodes");
    }
    return sol;
}

RegressionBSDESolution solve_gamma2_regression(const MarketSpec& market, const FactorPaths& factors,
                                               const RegressionBSDESolution& mu, const BasisSpec& basis) {
    const TimeGrid& grid = factors.grid;
    const int d = market.noise_dim;
    if (factors.noise_dim() != d) throw ConfigError("factor increments do not match the noise dimension");
    if (mu.steps.size() != grid.size()) throw ConfigError("(M, U) solution does not match the grid");
    const auto gamma = gamma_path(market);
    const std::size_t n = grid.steps();
    const auto N = static_cast<Eigen::Index>(factors.paths());

    RegressionBSDESolution sol;
    sol.degree = basis.degree;
    sol.noise_dim = d;
    sol.steps.resize(n + 1);
    sol.steps[n] = terminal_fit(-market.mu2, basis.degree, d);

    Eigen::VectorXd current = Eigen::VectorXd::Constant(N, -market.mu2);
    for (std::size_t i = n; i-- > 0;) {
        const double t = grid[i];
        const double dt = grid.dt(i);
        const Eigen::VectorXd y = factors.Y.col(static_cast<Eigen::Index>(i));
        ProjectionStep step = project(y, current, factors.increments[i], dt, basis.degree);
        const Eigen::MatrixXd theta = theta_matrix(market, t, y);
        const double r = market.r(t);
        const double G = gamma[i];

        Eigen::VectorXd M(N);
        Eigen::MatrixXd U(N, d);
        for (Eigen::Index p = 0; p < N; ++p) {
            M[p] = std::max(mu.value(i, y[p]), kMFloor);
            U.row(p) = mu.z(i, y[p]).transpose();
        }

        auto driver = [&](const Eigen::VectorXd& G2) {
            Eigen::VectorXd f(N);
            for (Eigen::Index p = 0; p < N; ++p) {
                const auto th = theta.row(p);
                const Eigen::RowVectorXd shift = th + U.row(p) / M[p];
                f[p] = r * G2[p] - shift.dot(step.z_hat.row(p)) - (th.squaredNorm() + U.row(p).dot(th) / M[p]) * G;
            }
            return f;
        };

        Eigen::VectorXd guess = current;
        LeastSquaresFit vfit;
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd target = current + dt * driver(guess);
            vfit = least_squares(step.X, target);
            guess = step.X * vfit.coef.col(0);
        }
        sol.picard_passes += 1;
        sol.nodes_total += static_cast<std::size_t>(N);

        StepFit& fit = step.fit;
        fit.value_coef = pad(vfit.coef.col(0), basis.degree + 1);
        fit.value_residual_rms = vfit.residual_rms[0];
        fit.condition = std::max(fit.condition, vfit.condition);
        sol.steps[i] = std::move(fit);
        current = guess;
    }
    return sol;
}

std::vector<double> mean_value_path(const RegressionBSDESolution& sol, const FactorPaths& factors) {
    std::vector<double> out(sol.steps.size(), 0.0);
    const auto N = factors.Y.rows();
    for (std::size_t i = 0; i < sol.steps.size(); ++i) {
        double acc = 0.0;
        for (Eigen::Index p = 0; p < N; ++p) acc += sol.value(i, factors.Y(p, static_cast<Eigen::Index>(i)));
        out[i] = acc / static_cast<double>(N);
    }
    return out;
}

double integrand_zero_score(const RegressionBSDESolution& sol) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i + 1 < sol.steps.size(); ++i) {
        num += sol.steps[i].z_mean.squaredNorm();
        den += sol.steps[i].z_stderr.squaredNorm();
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

MVAnsatzSolution regression_solution(const MarketSpec& market, const FactorPaths& factors, const BasisSpec& basis) {
    auto mu = std::make_shared<RegressionBSDESolution>(solve_MU_regression(market, factors, basis));
    auto g2 = std::make_shared<RegressionBSDESolution>(solve_gamma2_regression(market, factors, *mu, basis));
    MVAnsatzSolution s;
    s.grid = factors.grid;
    s.deterministic = false;
    s.Gamma1 = gamma1_path(market);
    s.Gamma = gamma_path(market);
    s.M = mean_value_path(*mu, factors);
    s.Gamma2 = mean_value_path(*g2, factors);
    s.Gamma3.resize(s.Gamma2.size());
    for (std::size_t i = 0; i < s.Gamma2.size(); ++i) s.Gamma3[i] = s.Gamma2[i] - s.Gamma[i];
    s.Gamma3.back() = 0.0;
    for (std::size_t i = 0; i < mu->steps.size(); ++i) {
        s.U.push_back(mu->steps[i].z_mean);
        s.gamma2.push_back(g2->steps[i].z_mean);
    }
    s.mu_regression = std::move(mu);
    s.gamma2_regression = std::move(g2);
    return s;
}

}  // namespace tilq
