#pragma once

#include "tilq/coefficient_path.hpp"
#include "tilq/time_grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tilq {

/// Coefficients of the scalar-state LQ problem evaluated at one time.
struct LQCoefficients {
    double A = 0.0;
    Eigen::VectorXd B;      // l
    Eigen::VectorXd C;      // d
    Eigen::MatrixXd D;      // d x l
    double b = 0.0;
    Eigen::VectorXd sigma;  // d
    double Q = 0.0;
    Eigen::MatrixXd R;      // l x l
};

/// Matrix-valued state data, only used for the second adjoint when n > 1.
struct MultiStateData {
    MatrixPath A;                 // n x n
    std::vector<MatrixPath> C;    // one n x n matrix per noise component
    MatrixPath Q;                 // n x n
    Eigen::MatrixXd G;            // n x n
};

/// Time-inconsistent LQ problem with deterministic coefficients:
///   dX = [A X + B'u + b] ds + [C X + D u + sigma]' dW
///   J(t, x; u) = 1/2 E_t int (Q X^2 + u'R u) + 1/2 G E_t X_T^2
///                - 1/2 h (E_t X_T)^2 - (mu1 x + mu2) E_t X_T
struct ProblemSpec {
    int state_dim = 1;
    int control_dim = 1;
    int noise_dim = 1;
    ScalarPath A;
    VectorPath B;
    VectorPath C;
    MatrixPath D;
    ScalarPath b;
    VectorPath sigma;
    ScalarPath Q;
    MatrixPath R;
    double G = 1.0;
    double h = 1.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double x0 = 1.0;
    TimeGrid grid;
    std::optional<MultiStateData> multistate;

    LQCoefficients at(double t) const;
    std::vector<double> breakpoints() const;
};

/// Shape checks (dimensions, coefficient coverage of [0, T]) and insertion of
/// every coefficient breakpoint into the grid. Throws ConfigError.
ProblemSpec finalize(ProblemSpec spec);

/// Constant-coefficient convenience data; vectors and matrices are sized by
/// the caller (B: l, C: d, D: d x l, sigma: d, R: l x l).
struct ConstantProblemData {
    double A = 0.0;
    Eigen::VectorXd B = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd C = Eigen::VectorXd::Zero(1);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(1, 1);
    double b = 0.0;
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(1);
    double Q = 0.0;
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(1, 1);
    double G = 1.0;
    double h = 1.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double x0 = 1.0;
};

ProblemSpec constant_problem(const ConstantProblemData& data, double horizon, std::size_t steps);

// ---------------------------------------------------------------------------
// Mean-variance market

struct DeterministicPremium {
    VectorPath theta;  // d
};

/// One-factor Ornstein-Uhlenbeck premium: dY = kappa (mean - Y) dt + vol dW^k,
/// theta(Y) = theta_bar + loading * Y, with k = factor_component.
struct OUFactorPremium {
    double kappa = 0.0;
    double mean = 0.0;
    double vol = 0.0;
    double y0 = 0.0;
    Eigen::VectorXd theta_bar;
    Eigen::VectorXd loading;
    int factor_component = 0;

    Eigen::VectorXd theta(double y) const { return theta_bar + loading * y; }
};

using PremiumModel = std::variant<DeterministicPremium, OUFactorPremium>;

/// Complete market in u = sigma' pi coordinates:
///   dX = r X ds + theta'u ds + u' dW,
///   J(t, x; u) = 1/2 Var_t(X_T) - (mu1 x + mu2) E_t X_T.
struct MarketSpec {
    ScalarPath r;
    PremiumModel premium;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double x0 = 1.0;
    TimeGrid grid;
    int noise_dim = 1;
    std::optional<MatrixPath> volatility;  // d x d, only for pi = (sigma')^{-1} u

    bool deterministic_premium() const { return std::holds_alternative<DeterministicPremium>(premium); }
    /// theta at time t; `factor` is ignored for a deterministic premium.
    Eigen::VectorXd theta(double t, double factor = 0.0) const;
    const OUFactorPremium& factor_model() const;
};

MarketSpec finalize(MarketSpec market);

/// The deterministic-premium market as an instance of ProblemSpec
/// (A = r, B = theta, D = I, G = h = 1, everything else zero).
ProblemSpec as_problem(const MarketSpec& market);

// ---------------------------------------------------------------------------
// Standing assumptions

enum class TheoremCase {
    none,
    proportional,   // (i): R >= delta I, B = lambda D'C
    nondegenerate,  // (ii): R >= delta I, D'D >= delta I
    singular,       // (iii): R == 0, D'D >= delta I
};

std::string to_string(TheoremCase c);

struct Violation {
    std::string assumption;
    std::optional<double> time;
};

struct ValidationResult {
    std::vector<Violation> violations;
    TheoremCase equilibrium_case = TheoremCase::none;
    std::vector<TheoremCase> satisfied_cases;
    bool closed_form_only = false;  // n > 1: only the second adjoint is available
    std::optional<double> proportionality;  // lambda when B = lambda D'C

    bool ok() const { return violations.empty(); }
    bool solvable() const { return ok() && !closed_form_only && equilibrium_case != TheoremCase::none; }
};

/// Strict positivity threshold used for "R - delta I >= 0" style checks.
inline constexpr double kDefiniteness = 1e-8;
/// Eigenvalue floor accepted as positive semi-definite.
inline constexpr double kPsdFloor = -1e-10;

ValidationResult validate_spec(const ProblemSpec& spec);
ValidationResult validate_market(const MarketSpec& market);

/// Gamma1(t_i) = mu1 exp(int_{t_i}^T A) on the spec grid (Simpson quadrature).
std::vector<double> gamma1_closed_form(const ProblemSpec& spec);

}  // namespace tilq
