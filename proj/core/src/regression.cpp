#include "tilq/regression.hpp"

#include "tilq/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace tilq {

Eigen::VectorXd PolyBasis::eval(double y) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(size());
    v[0] = 1.0;
    if (intercept_only) return v;
    const double z = (y - center) / scale;
    for (int k = 1; k <= degree; ++k) v[k] = v[k - 1] * z;
    return v;
}

double PolyBasis::dot(const Eigen::VectorXd& coef, double y) const {
    if (intercept_only) return coef[0];
    const double z = (y - center) / scale;
    double acc = coef[degree];
    for (int k = degree - 1; k >= 0; --k) acc = acc * z + coef[k];
    return acc;
}

PolyBasis PolyBasis::fit(const Eigen::VectorXd& sample, int degree) {
    PolyBasis b;
    b.degree = degree;
    const auto n = sample.size();
    if (n == 0) {
        b.intercept_only = true;
        return b;
    }
    b.center = sample.mean();
    const double var = (sample.array() - b.center).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (degree == 0 || !(sd > 1e-12 * (1.0 + std::abs(b.center)))) {
        b.intercept_only = true;
        b.scale = 1.0;
    } else {
        b.scale = sd;
    }
    return b;
}

Eigen::VectorXd StepFit::z(double y) const {
    const Eigen::VectorXd phi = basis.eval(y);
    return z_coef.transpose() * phi;
}

Eigen::MatrixXd design_matrix(const PolyBasis& basis, const Eigen::VectorXd& sample) {
    const int k = basis.active();
    Eigen::MatrixXd X(sample.size(), k);
    for (Eigen::Index r = 0; r < sample.size(); ++r) {
        X(r, 0) = 1.0;
        if (k > 1) {
            const double z = (sample[r] - basis.center) / basis.scale;
            for (int j = 1; j < k; ++j) X(r, j) = X(r, j - 1) * z;
        }
    }
    return X;
}

LeastSquaresFit least_squares(const Eigen::MatrixXd& design, const Eigen::MatrixXd& response) {
    LeastSquaresFit fit;
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
    const auto k = design.cols();
    const Eigen::MatrixXd R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    fit.condition = smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
    if (!(fit.condition <= kMaxCondition)) {
        throw NumericalError("ill-conditioned basis (condition number " + std::to_string(fit.condition) + ")");
    }
    fit.coef = qr.solve(response);
    fit.residuals = response - design * fit.coef;
    const double rows = static_cast<double>(std::max<Eigen::Index>(1, design.rows()));
    fit.residual_rms = (fit.residuals.colwise().squaredNorm() / rows).cwiseSqrt().transpose();
    return fit;
}

}  // namespace tilq
