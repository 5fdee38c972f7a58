#pragma once

#include "tilq/model.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>

namespace tilq::testing {

inline Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }
inline Eigen::MatrixXd mat1(double x) { return Eigen::MatrixXd::Constant(1, 1, x); }

/// Scalar problem with every coefficient constant and l = d = 1.
inline ConstantProblemData scalar_data(double A, double B, double C, double D, double b, double sigma, double Q,
                                       double R, double G, double h, double mu1, double mu2, double x0 = 1.0) {
    ConstantProblemData d;
    d.A = A;
    d.B = vec1(B);
    d.C = vec1(C);
    d.D = mat1(D);
    d.b = b;
    d.sigma = vec1(sigma);
    d.Q = Q;
    d.R = mat1(R);
    d.G = G;
    d.h = h;
    d.mu1 = mu1;
    d.mu2 = mu2;
    d.x0 = x0;
    return d;
}

/// The case (i) setting with R = D = 1, C = 0.2, B = D'C.
inline ProblemSpec proportional_spec(std::size_t steps = 200) {
    return constant_problem(scalar_data(0.05, 0.2, 0.2, 1.0, 0.0, 0.0, 0.5, 1.0, 2.0, 1.0, 0.5, 0.0), 1.0, steps);
}

/// The configs/lq_case2.toml problem.
inline ProblemSpec nondegenerate_spec(std::size_t steps = 200) {
    return constant_problem(scalar_data(0.05, 0.1, -0.8, 0.3, 0.1, 0.2, 0.5, 0.05, 2.0, 1.0, 0.5, 0.3), 1.0, steps);
}

inline MarketSpec det_market(double r, Eigen::VectorXd theta, double mu1, double mu2, double T, std::size_t steps,
                             double x0 = 1.0) {
    MarketSpec m;
    m.r = ScalarPath::constant(r, T);
    m.noise_dim = static_cast<int>(theta.size());
    m.premium = DeterministicPremium{VectorPath::constant(std::move(theta), T)};
    m.mu1 = mu1;
    m.mu2 = mu2;
    m.x0 = x0;
    m.grid = TimeGrid::uniform(T, steps);
    return finalize(std::move(m));
}

/// Deterministic premium theta written as an OU factor with zero loading.
inline MarketSpec flat_factor_market(double r, double theta, double mu1, double mu2, double T, std::size_t steps) {
    MarketSpec m;
    m.r = ScalarPath::constant(r, T);
    OUFactorPremium ou;
    ou.kappa = 1.0;
    ou.vol = 0.3;
    ou.theta_bar = vec1(theta);
    ou.loading = vec1(0.0);
    m.premium = ou;
    m.mu1 = mu1;
    m.mu2 = mu2;
    m.grid = TimeGrid::uniform(T, steps);
    return finalize(std::move(m));
}

inline MarketSpec ou_market(double r, double mu1, double mu2, double T, std::size_t steps) {
    MarketSpec m;
    m.r = ScalarPath::constant(r, T);
    OUFactorPremium ou;
    ou.kappa = 1.0;
    ou.mean = 0.0;
    ou.vol = 0.3;
    ou.y0 = 0.0;
    ou.theta_bar = vec1(0.5);
    ou.loading = vec1(0.3);
    m.premium = ou;
    m.mu1 = mu1;
    m.mu2 = mu2;
    m.grid = TimeGrid::uniform(T, steps);
    return finalize(std::move(m));
}

inline std::filesystem::path source_dir() { return TILQ_SOURCE_DIR; }

}  // namespace tilq::testing
