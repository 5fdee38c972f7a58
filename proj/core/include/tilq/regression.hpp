#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace tilq {

/// Monomials 1, y, ..., y^p in the standardized variable (Y - center) / scale.
/// A degenerate sample (zero spread) collapses the basis to the intercept;
/// the coefficient vector keeps length p + 1 with zero higher entries.
struct PolyBasis {
    int degree = 3;
    double center = 0.0;
    double scale = 1.0;
    bool intercept_only = false;

    int size() const { return degree + 1; }
    int active() const { return intercept_only ? 1 : degree + 1; }
    Eigen::VectorXd eval(double y) const;
    double dot(const Eigen::VectorXd& coef, double y) const;

    /// Basis fitted to the sample: center = mean, scale = standard deviation.
    static PolyBasis fit(const Eigen::VectorXd& sample, int degree);
};

/// Least-squares projection of one or more response columns on a design
/// matrix via Householder QR.
struct LeastSquaresFit {
    Eigen::MatrixXd coef;        // active x responses
    Eigen::MatrixXd residuals;   // rows x responses
    double condition = 1.0;      // ratio of extreme singular values of R
    Eigen::VectorXd residual_rms;
};

inline constexpr double kMaxCondition = 1e12;

/// Design matrix for `basis` evaluated on `sample` (active columns only).
Eigen::MatrixXd design_matrix(const PolyBasis& basis, const Eigen::VectorXd& sample);

/// Throws NumericalError("ill-conditioned basis") when the condition number
/// exceeds kMaxCondition.
LeastSquaresFit least_squares(const Eigen::MatrixXd& design, const Eigen::MatrixXd& response);

/// Coefficients of one BSDE time step: value Y_i = basis(y) . value_coef and
/// integrand Z_i = z_coef' basis(y) (one column per noise component).
struct StepFit {
    PolyBasis basis;
    Eigen::VectorXd value_coef;  // basis.size()
    Eigen::MatrixXd z_coef;      // basis.size() x d
    double value_residual_rms = 0.0;
    double z_residual_rms = 0.0;
    double condition = 1.0;
    Eigen::VectorXd z_mean;    // sample mean of the fitted Z over paths
    Eigen::VectorXd z_stderr;  // standard error of the per-step integrand target mean

    double value(double y) const { return basis.dot(value_coef, y); }
    Eigen::VectorXd z(double y) const;
};

/// Per-step regression representation of a BSDE solution (Y, Z) on a grid.
/// steps.back() holds the terminal data as a constant.
struct RegressionBSDESolution {
    std::vector<StepFit> steps;
    int degree = 3;
    int noise_dim = 1;
    std::size_t floored = 0;       // regression nodes where the value hit the floor
    std::size_t nodes_total = 0;
    std::size_t picard_passes = 0;

    double value(std::size_t i, double y) const { return steps[i].value(y); }
    Eigen::VectorXd z(std::size_t i, double y) const { return steps[i].z(y); }
    double floored_fraction() const {
        return nodes_total ? static_cast<double>(floored) / static_cast<double>(nodes_total) : 0.0;
    }
};

}  // namespace tilq
