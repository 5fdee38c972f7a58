#pragma once

#include "tilq/model.hpp"
#include "tilq/time_grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace tilq {

/// Constants of the truncation functions M v c, M ^ K and J v c. Unset c0/K0
/// default to 1e-6 * min(1, G, h) and 1e6 * max(1, G).
struct TruncationConfig {
    std::optional<double> c0;
    std::optional<double> K0;
    double factor = 10.0;
    int max_rounds = 8;
};

struct TruncationFlags {
    bool M_floor = false;  // M v c (or M+) differed from M
    bool M_cap = false;    // M ^ K differed from M
    bool J_floor = false;  // J v c differed from J

    bool any() const { return M_floor || M_cap || J_floor; }
};

struct TruncationRound {
    double c = 0.0;
    double K = 0.0;
    TruncationFlags flags;
};

struct TruncationReport {
    double c = 0.0;
    double K = 0.0;
    TruncationFlags binding;
    std::vector<TruncationRound> history;
};

/// Which truncated (M, J) system was integrated.
enum class MJRoute { standard, singular };

struct MJSolution {
    TimeGrid grid;
    std::vector<double> M;
    std::vector<double> J;
    TruncationReport truncation;
    MJRoute route = MJRoute::standard;
};

struct MNPair {
    std::vector<double> M;
    std::vector<double> N;
};

struct RiccatiSolution {
    TimeGrid grid;
    std::vector<double> M;
    std::vector<double> N;
    std::vector<double> J;
    std::vector<double> Gamma1;
    std::vector<double> Phi;
    TruncationReport truncation;
    MJRoute route = MJRoute::standard;
    TheoremCase theorem_case = TheoremCase::none;
    double eta = 0.0;  // min over nodes of M
};

/// u*_s = alpha_s X_s + beta_s at the grid nodes.
struct EquilibriumPolicy {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> alpha;
    std::vector<Eigen::VectorXd> beta;
    /// (R + M D'D) alpha + (M - N - Gamma1) B + M D'C at each node
    std::vector<Eigen::VectorXd> alpha_residual;
    /// (R + M D'D) beta + Phi B + M D'sigma at each node
    std::vector<Eigen::VectorXd> beta_residual;

    double alpha_residual_sup() const;
    double beta_residual_sup() const;
};

struct AdjointDiagnostics {
    std::vector<double> P;                      // second adjoint on the grid
    std::vector<Eigen::MatrixXd> H;             // R + P D'D
    std::vector<Eigen::VectorXd> lambda_diagonal_residual;  // Lambda(s;s) per unit state and constant part, stacked
    double min_H_eigenvalue = 0.0;
};

struct Gamma1Routes {
    std::vector<double> closed_form;
    std::vector<double> ode;
    double discrepancy = 0.0;
};

/// Gamma1_t = mu1 exp(int_t^T A) by quadrature and by backward RK4.
Gamma1Routes gamma1_routes(const ProblemSpec& spec);

/// Closed-form Gamma1 on the grid after checking both routes agree to 1e-8.
std::vector<double> solve_gamma1(const ProblemSpec& spec);

/// Truncated (M, J) system with the retry loop on (c, K). Requires a valid
/// n = 1 spec in one of the equilibrium cases; the singular case (R = 0)
/// integrates the R-free system with only the M v c and J v c truncations.
MJSolution solve_MJ(const ProblemSpec& spec, const TruncationConfig& trunc = {});

/// N = M / J, with N(T) set to h after checking M(T)/J(T) = h within 1e-10.
MNPair recover_MN(const std::vector<double>& M, const std::vector<double>& J, double h);

/// Direct backward integration of the coupled (M, N) system (no truncation).
MNPair solve_MN_direct(const ProblemSpec& spec);

/// Linear Phi equation integrated backwards with Phi(T) = -mu2, using M, N
/// and Gamma1 from `sol`.
std::vector<double> solve_phi(const ProblemSpec& spec, const RiccatiSolution& sol);

EquilibriumPolicy feedback_coeffs(const ProblemSpec& spec, const RiccatiSolution& sol);

/// Second adjoint P(s) for n = 1 (time-inconsistency index t plays no role).
double closed_form_P(const ProblemSpec& spec, double s);
std::vector<double> closed_form_P_path(const ProblemSpec& spec);

/// Matrix second adjoint for n >= 1: dP/ds = -(A'P + PA + sum_j C_j'P C_j + Q),
/// P(T) = G, integrated by RK4 on the grid.
std::vector<Eigen::MatrixXd> matrix_P_path(const ProblemSpec& spec);

/// H(s) = R(s) + P(s) D(s)'D(s).
Eigen::MatrixXd hessian_weight(const ProblemSpec& spec, double s);

AdjointDiagnostics adjoint_diagnostics(const ProblemSpec& spec, const RiccatiSolution& sol);

struct RiccatiResult {
    ValidationResult validation;
    RiccatiSolution solution;
    EquilibriumPolicy policy;
    AdjointDiagnostics adjoint;
    double route_gap = 0.0;  // sup |(M, N) direct - (M, J) recovered|, NaN if not computed
    double gamma1_gap = 0.0;
};

/// Full pipeline: validation, Gamma1, (M, J) with truncation retries,
/// recovery of N, Phi, feedback coefficients, adjoint diagnostics and the
/// (M, N) route cross-check. Throws AssumptionViolation or NumericalError.
RiccatiResult solve_riccati(const ProblemSpec& spec, const TruncationConfig& trunc = {});

}  // namespace tilq
