#pragma once

#include <Eigen/Dense>

namespace tilq {

/// Cholesky solve for symmetric positive definite systems. If the plain
/// factorisation fails, a diagonal jitter of 1e-12 (relative to the mean
/// diagonal) is added once; failing again throws NumericalError.
class SpdSolver {
public:
    explicit SpdSolver(const Eigen::MatrixXd& matrix);

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }
    Eigen::MatrixXd inverse() const;
    bool jittered() const { return jittered_; }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    bool jittered_ = false;
};

bool is_symmetric(const Eigen::MatrixXd& m, double tol = 1e-12);

/// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const Eigen::MatrixXd& m);

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace tilq
