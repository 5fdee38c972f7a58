#include "tilq/riccati.hpp"

#include "tilq/errors.hpp"
#include "tilq/linalg.hpp"
#include "tilq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace tilq {

namespace {

void require_solvable(const ProblemSpec& spec, const ValidationResult& v) {
    if (spec.state_dim != 1 || v.closed_form_only) {
        throw AssumptionViolation("equilibrium solvers require state dimension n = 1");
    }
    if (!v.ok()) {
        std::ostringstream os;
        os << "standing assumptions violated:";
        for (const auto& x : v.violations) {
            os << " [" << x.assumption;
            if (x.time) os << " at t = " << *x.time;
            os << "]";
        }
        throw AssumptionViolation(os.str());
    }
    if (v.equilibrium_case == TheoremCase::none) {
        throw AssumptionViolation("no equilibrium case (i)/(ii)/(iii) applies to this spec");
    }
}

numerics::HorizonExponential gamma1_function(const ProblemSpec& spec) {
    return numerics::HorizonExponential(spec.grid, [&spec](double t) { return spec.A(t); });
}

/// Scalars built from S^{-1} with S = R + m D'D (or D'D in the singular route).
struct Contractions {
    double a = 0.0;   // B'S^{-1}(B + D'C)
    double q = 0.0;   // (B + D'C)'S^{-1}(B + D'C)
    double e = 0.0;   // B'S^{-1}D'C
    double f = 0.0;   // C'D S^{-1}(B + D'C)
    double bb = 0.0;  // B'S^{-1}B
};

Contractions contract(const LQCoefficients& c, const Eigen::MatrixXd& S) {
    const SpdSolver solver(S);
    const Eigen::VectorXd DC = c.D.transpose() * c.C;
    const Eigen::VectorXd BDC = c.B + DC;
    const Eigen::VectorXd y = solver.solve(BDC);
    const Eigen::VectorXd z = solver.solve(Eigen::VectorXd(c.B));
    Contractions k;
    k.a = c.B.dot(y);
    k.q = BDC.dot(y);
    k.e = z.dot(DC);
    k.f = DC.dot(y);
    k.bb = c.B.dot(z);
    return k;
}

struct MJAttempt {
    std::vector<Eigen::Vector2d> states;
    TruncationFlags flags;
};

MJAttempt integrate_MJ(const ProblemSpec& spec, MJRoute route, double c, double K,
                       const numerics::HorizonExponential& g1) {
    MJAttempt out;
    auto& flags = out.flags;
    const double mu1 = spec.mu1;
    auto rhs = [&](double t, const Eigen::Vector2d& y) -> Eigen::Vector2d {
        const LQCoefficients co = spec.at(t);
        const double M = y[0];
        const double J = y[1];
        const double gamma1 = mu1 * g1(t);
        const double c2 = co.C.squaredNorm();
        const Eigen::MatrixXd DD = co.D.transpose() * co.D;
        if (M < c) flags.M_floor = true;
        if (J < c) flags.J_floor = true;
        const double Mc = std::max(M, c);
        const double Jc = std::max(J, c);
        Eigen::Vector2d d;
        if (route == MJRoute::singular) {
            const Contractions k = contract(co, DD);
            d[0] = -(2.0 * co.A + c2 - k.q + k.a / Jc) * M - co.Q - gamma1 * k.a;
            d[1] = -(c2 - k.f + (gamma1 * k.e + co.Q) / Mc) * J - k.e;
        } else {
            if (M > K) flags.M_cap = true;
            const double Mp = std::max(M, 0.0);
            const double Mk = std::min(Mp, K);
            const Contractions k = contract(co, co.R + Mp * DD);
            d[0] = -(2.0 * co.A + c2 + gamma1 * k.a) * M - co.Q + k.q * M * Mk - k.a * M * Mk / Jc;
            const double lambda1 = c2 - k.f * Mk + gamma1 * k.e + co.Q / Mc;
            d[1] = -lambda1 * J - k.e * Mk;
        }
        return d;
    };
    out.states = numerics::rk4_backward(spec.grid, Eigen::Vector2d(spec.G, spec.G / spec.h), rhs);
    for (const auto& y : out.states) {
        if (y[0] < c) flags.M_floor = true;
        if (y[1] < c) flags.J_floor = true;
        if (route == MJRoute::standard && y[0] > K) flags.M_cap = true;
    }
    return out;
}

/// (dM/dt, dN/dt) of the untruncated coupled system.
Eigen::Vector2d mn_rhs(const ProblemSpec& spec, double t, double M, double N, double gamma1) {
    const LQCoefficients co = spec.at(t);
    const double c2 = co.C.squaredNorm();
    const Contractions k = contract(co, co.R + M * co.D.transpose() * co.D);
    Eigen::Vector2d d;
    d[0] = -(2.0 * co.A + c2 + gamma1 * k.a) * M - co.Q + k.q * M * M - k.a * M * N;
    d[1] = -(2.0 * co.A + gamma1 * k.bb) * N + k.a * M * N - k.bb * N * N;
    return d;
}

double sup_norm(const std::vector<Eigen::VectorXd>& v) {
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, x.size() ? x.cwiseAbs().maxCoeff() : 0.0);
    return m;
}

}  // namespace

double EquilibriumPolicy::alpha_residual_sup() const { return sup_norm(alpha_residual); }
double EquilibriumPolicy::beta_residual_sup() const { return sup_norm(beta_residual); }

Gamma1Routes gamma1_routes(const ProblemSpec& spec) {
    Gamma1Routes r;
    r.closed_form = gamma1_closed_form(spec);
    r.ode = numerics::rk4_backward(spec.grid, spec.mu1, [&](double t, double g) { return -spec.A(t) * g; });
    r.discrepancy = numerics::sup_abs_diff(r.closed_form, r.ode);
    return r;
}

std::vector<double> solve_gamma1(const ProblemSpec& spec) {
    if (spec.state_dim != 1) throw AssumptionViolation("solve_gamma1 requires n = 1");
    auto r = gamma1_routes(spec);
    if (r.discrepancy > 1e-8) {
        throw NumericalError("Gamma1 closed form and ODE routes differ by " + std::to_string(r.discrepancy));
    }
    return std::move(r.closed_form);
}

MJSolution solve_MJ(const ProblemSpec& spec, const TruncationConfig& trunc) {
    const ValidationResult v = validate_spec(spec);
    require_solvable(spec, v);
    const MJRoute route = v.equilibrium_case == TheoremCase::singular ? MJRoute::singular : MJRoute::standard;
    const auto g1 = gamma1_function(spec);

    double c = trunc.c0.value_or(1e-6 * std::min({1.0, spec.G, spec.h}));
    double K = trunc.K0.value_or(1e6 * std::max(1.0, spec.G));
    TruncationReport report;
    for (int round = 0; round < trunc.max_rounds; ++round) {
        MJAttempt attempt = integrate_MJ(spec, route, c, K, g1);
        report.history.push_back({c, K, attempt.flags});
        if (!attempt.flags.any()) {
            MJSolution sol;
            sol.grid = spec.grid;
            sol.route = route;
            sol.M.reserve(attempt.states.size());
            sol.J.reserve(attempt.states.size());
            for (const auto& y : attempt.states) {
                sol.M.push_back(y[0]);
                sol.J.push_back(y[1]);
            }
            sol.M.back() = spec.G;
            sol.J.back() = spec.G / spec.h;
            report.c = c;
            report.K = K;
            report.binding = attempt.flags;
            sol.truncation = std::move(report);
            return sol;
        }
        c /= trunc.factor;
        K *= trunc.factor;
    }
    throw NumericalError("truncation persistently binding after " + std::to_string(trunc.max_rounds) +
                         " rounds (hypotheses likely violated)");
}

MNPair recover_MN(const std::vector<double>& M, const std::vector<double>& J, double h) {
    if (M.size() != J.size() || M.empty()) throw std::invalid_argument("recover_MN: size mismatch");
    MNPair out{M, std::vector<double>(M.size())};
    for (std::size_t i = 0; i < M.size(); ++i) {
        if (!(J[i] > 0.0)) throw NumericalError("recover_MN: nonpositive J at node " + std::to_string(i));
        out.N[i] = M[i] / J[i];
    }
    if (std::abs(out.N.back() - h) > 1e-10 * std::max(1.0, std::abs(h))) {
        throw NumericalError("recover_MN: terminal N differs from h");
    }
    out.N.back() = h;
    return out;
}

MNPair solve_MN_direct(const ProblemSpec& spec) {
    if (spec.state_dim != 1) throw AssumptionViolation("solve_MN_direct requires n = 1");
    const auto g1 = gamma1_function(spec);
    auto states = numerics::rk4_backward(spec.grid, Eigen::Vector2d(spec.G, spec.h),
                                         [&](double t, const Eigen::Vector2d& y) -> Eigen::Vector2d {
                                             return mn_rhs(spec, t, y[0], y[1], spec.mu1 * g1(t));
                                         });
    MNPair out;
    for (const auto& y : states) {
        out.M.push_back(y[0]);
        out.N.push_back(y[1]);
    }
    out.M.back() = spec.G;
    out.N.back() = spec.h;
    return out;
}

std::vector<double> solve_phi(const ProblemSpec& spec, const RiccatiSolution& sol) {
    const TimeGrid& grid = sol.grid;
    const std::size_t n = grid.steps();

    std::vector<Eigen::Vector2d> slope(n + 1);
    for (std::size_t i = 0; i <= n; ++i) slope[i] = mn_rhs(spec, grid[i], sol.M[i], sol.N[i], sol.Gamma1[i]);

    // dPhi/dt = -(A - w'S^{-1}B) Phi - (M - N) b - M C'sigma + w'S^{-1} M D'sigma
    auto rhs = [&](double t, double M, double N, double phi) {
        const LQCoefficients co = spec.at(t);
        const Eigen::MatrixXd S = co.R + M * co.D.transpose() * co.D;
        const SpdSolver solver(S);
        const Eigen::VectorXd w = (M - N) * co.B + M * co.D.transpose() * co.C;
        const Eigen::VectorXd Dsig = co.D.transpose() * co.sigma;
        const Eigen::VectorXd Sw = solver.solve(w);
        return -(co.A - Sw.dot(co.B)) * phi - (M - N) * co.b - M * co.C.dot(co.sigma) + M * Sw.dot(Dsig);
    };

    std::vector<double> phi(n + 1);
    phi[n] = -spec.mu2;
    for (std::size_t i = n; i-- > 0;) {
        const double h = -grid.dt(i);
        const double t1 = grid[i + 1];
        const double tm = t1 + 0.5 * h;
        const double Mm = numerics::hermite_midpoint(sol.M[i], slope[i][0], sol.M[i + 1], slope[i + 1][0], grid.dt(i));
        const double Nm = numerics::hermite_midpoint(sol.N[i], slope[i][1], sol.N[i + 1], slope[i + 1][1], grid.dt(i));
        const double y = phi[i + 1];
        const double k1 = rhs(t1, sol.M[i + 1], sol.N[i + 1], y);
        const double k2 = rhs(tm, Mm, Nm, y + 0.5 * h * k1);
        const double k3 = rhs(tm, Mm, Nm, y + 0.5 * h * k2);
        const double k4 = rhs(grid[i], sol.M[i], sol.N[i], y + h * k3);
        phi[i] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(phi[i])) throw NumericalError("non-finite Phi at node " + std::to_string(i));
    }
    return phi;
}

EquilibriumPolicy feedback_coeffs(const ProblemSpec& spec, const RiccatiSolution& sol) {
    EquilibriumPolicy p;
    p.grid = sol.grid;
    const std::size_t n = sol.grid.size();
    p.alpha.resize(n);
    p.beta.resize(n);
    p.alpha_residual.resize(n);
    p.beta_residual.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const LQCoefficients co = spec.at(sol.grid[i]);
        const double M = sol.M[i];
        const Eigen::MatrixXd S = co.R + M * co.D.transpose() * co.D;
        SpdSolver solver = [&]() {
            try {
                return SpdSolver(S);
            } catch (const NumericalError&) {
                throw NumericalError("singular R + M D'D at t = " + std::to_string(sol.grid[i]));
            }
        }();
        const Eigen::VectorXd ra = (M - sol.N[i] - sol.Gamma1[i]) * co.B + M * co.D.transpose() * co.C;
        const Eigen::VectorXd rb = sol.Phi[i] * co.B + M * co.D.transpose() * co.sigma;
        p.alpha[i] = -solver.solve(ra);
        p.beta[i] = -solver.solve(rb);
        p.alpha_residual[i] = S * p.alpha[i] + ra;
        p.beta_residual[i] = S * p.beta[i] + rb;
        if (!p.alpha[i].allFinite() || !p.beta[i].allFinite()) {
            throw NumericalError("non-finite feedback coefficient at t = " + std::to_string(sol.grid[i]));
        }
    }
    return p;
}

namespace {

/// One backward step of the closed-form P from P(t1) to P(t0), t0 < t1.
double p_step(const ProblemSpec& spec, double t0, double t1, double p1) {
    auto k = [&](double u) {
        const double a = spec.A(u);
        const Eigen::VectorXd c = spec.C(u);
        return 2.0 * a + c.squaredNorm();
    };
    const double tm = 0.5 * (t0 + t1);
    const double full = numerics::simpson(k, t0, t1);
    const double half = numerics::simpson(k, t0, tm);
    const double forcing = (t1 - t0) / 6.0 * (spec.Q(t0) + 4.0 * std::exp(half) * spec.Q(tm) + std::exp(full) * spec.Q(t1));
    return std::exp(full) * p1 + forcing;
}

}  // namespace

std::vector<double> closed_form_P_path(const ProblemSpec& spec) {
    const TimeGrid& grid = spec.grid;
    std::vector<double> P(grid.size());
    P.back() = spec.G;
    for (std::size_t i = grid.steps(); i-- > 0;) P[i] = p_step(spec, grid[i], grid[i + 1], P[i + 1]);
    return P;
}

double closed_form_P(const ProblemSpec& spec, double s) {
    const TimeGrid& grid = spec.grid;
    const double T = grid.horizon();
    if (s < -1e-12 * T || s > T * (1.0 + 1e-12)) throw std::out_of_range("closed_form_P: s outside [0, T]");
    const std::size_t j = grid.interval_of(s);
    const auto P = closed_form_P_path(spec);
    if (s == grid[j]) return P[j];
    if (s >= grid[j + 1]) return P[j + 1];
    return p_step(spec, s, grid[j + 1], P[j + 1]);
}

std::vector<Eigen::MatrixXd> matrix_P_path(const ProblemSpec& spec) {
    if (spec.state_dim == 1 && !spec.multistate) {
        const auto P = closed_form_P_path(spec);
        std::vector<Eigen::MatrixXd> out;
        out.reserve(P.size());
        for (double p : P) out.push_back(Eigen::MatrixXd::Constant(1, 1, p));
        return out;
    }
    const auto& ms = *spec.multistate;
    auto rhs = [&](double t, const Eigen::MatrixXd& P) -> Eigen::MatrixXd {
        const Eigen::MatrixXd A = ms.A(t);
        Eigen::MatrixXd d = A.transpose() * P + P * A + ms.Q(t);
        for (const auto& Cj : ms.C) {
            const Eigen::MatrixXd c = Cj(t);
            d += c.transpose() * P * c;
        }
        return -d;
    };
    auto out = numerics::rk4_backward(spec.grid, Eigen::MatrixXd(ms.G), rhs);
    for (auto& P : out) P = symmetrize(P);
    return out;
}

Eigen::MatrixXd hessian_weight(const ProblemSpec& spec, double s) {
    const Eigen::MatrixXd D = spec.D(s);
    return symmetrize(spec.R(s) + closed_form_P(spec, s) * D.transpose() * D);
}

AdjointDiagnostics adjoint_diagnostics(const ProblemSpec& spec, const RiccatiSolution& sol) {
    AdjointDiagnostics a;
    a.P = closed_form_P_path(spec);
    const EquilibriumPolicy policy = feedback_coeffs(spec, sol);
    a.min_H_eigenvalue = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sol.grid.size(); ++i) {
        const double t = sol.grid[i];
        const Eigen::MatrixXd D = spec.D(t);
        Eigen::MatrixXd H = symmetrize(spec.R(t) + a.P[i] * D.transpose() * D);
        a.min_H_eigenvalue = std::min(a.min_H_eigenvalue, min_eigenvalue(H));
        a.H.push_back(std::move(H));
        const auto l = policy.alpha_residual[i].size();
        Eigen::VectorXd r(2 * l);
        r << policy.alpha_residual[i], policy.beta_residual[i];
        a.lambda_diagonal_residual.push_back(std::move(r));
    }
    return a;
}

RiccatiResult solve_riccati(const ProblemSpec& spec, const TruncationConfig& trunc) {
    RiccatiResult out;
    out.validation = validate_spec(spec);
    require_solvable(spec, out.validation);

    const auto g1 = gamma1_routes(spec);
    out.gamma1_gap = g1.discrepancy;
    if (g1.discrepancy > 1e-8) {
        throw NumericalError("Gamma1 closed form and ODE routes differ by " + std::to_string(g1.discrepancy));
    }

    MJSolution mj = solve_MJ(spec, trunc);
    MNPair mn = recover_MN(mj.M, mj.J, spec.h);

    RiccatiSolution& sol = out.solution;
    sol.grid = spec.grid;
    sol.M = std::move(mn.M);
    sol.N = std::move(mn.N);
    sol.J = std::move(mj.J);
    sol.Gamma1 = g1.closed_form;
    sol.truncation = std::move(mj.truncation);
    sol.route = mj.route;
    sol.theorem_case = out.validation.equilibrium_case;
    sol.M.back() = spec.G;
    sol.N.back() = spec.h;
    sol.J.back() = spec.G / spec.h;
    sol.Gamma1.back() = spec.mu1;
    sol.eta = *std::min_element(sol.M.begin(), sol.M.end());
    for (std::size_t i = 0; i < sol.M.size(); ++i) {
        if (!(sol.M[i] > 0.0) || !(sol.N[i] > 0.0)) {
            throw NumericalError("non-positive M or N at node " + std::to_string(i));
        }
    }
    sol.Phi = solve_phi(spec, sol);
    sol.Phi.back() = -spec.mu2;

    out.policy = feedback_coeffs(spec, sol);
    out.adjoint = adjoint_diagnostics(spec, sol);

    try {
        const MNPair direct = solve_MN_direct(spec);
        out.route_gap = std::max(numerics::sup_abs_diff(direct.M, sol.M), numerics::sup_abs_diff(direct.N, sol.N));
    } catch (const NumericalError&) {
        out.route_gap = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace tilq
