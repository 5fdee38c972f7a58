#include "tilq/linalg.hpp"

#include "tilq/errors.hpp"

#include <algorithm>
#include <cmath>

namespace tilq {

SpdSolver::SpdSolver(const Eigen::MatrixXd& matrix) {
    llt_.compute(matrix);
    if (llt_.info() == Eigen::Success) return;
    const double scale = std::max(1.0, matrix.diagonal().cwiseAbs().mean());
    const Eigen::MatrixXd jittered =
        matrix + 1e-12 * scale * Eigen::MatrixXd::Identity(matrix.rows(), matrix.cols());
    llt_.compute(jittered);
    if (llt_.info() != Eigen::Success) {
        throw NumericalError("SpdSolver: matrix is not positive definite even after jitter");
    }
    jittered_ = true;
}

Eigen::MatrixXd SpdSolver::inverse() const {
    const auto n = llt_.matrixLLT().rows();
    return llt_.solve(Eigen::MatrixXd::Identity(n, n));
}

bool is_symmetric(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols()) return false;
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace tilq
