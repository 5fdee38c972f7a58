#include "tilq/model.hpp"

#include "tilq/errors.hpp"
#include "tilq/linalg.hpp"
#include "tilq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tilq {

namespace {

template <class V>
void append_breakpoints(std::vector<double>& out, const CoefficientPath<V>& p) {
    if (p.is_constant()) return;
    out.insert(out.end(), p.breakpoints().begin(), p.breakpoints().end());
}

template <class V>
void require_cover(const CoefficientPath<V>& p, double horizon, const char* name) {
    if (p.values().empty()) throw ConfigError(std::string("coefficient '") + name + "' is missing");
    if (p.start() != 0.0 || p.end() < horizon * (1.0 - 1e-12)) {
        std::ostringstream os;
        os << "coefficient '" << name << "' must cover [0, " << horizon << "], got [" << p.start() << ", "
           << p.end() << "]";
        throw ConfigError(os.str());
    }
}

void require_vector(const VectorPath& p, int size, const char* name) {
    for (const auto& v : p.values()) {
        if (v.size() != size) {
            throw ConfigError(std::string("coefficient '") + name + "' must have length " + std::to_string(size));
        }
    }
}

void require_matrix(const MatrixPath& p, int rows, int cols, const char* name) {
    for (const auto& v : p.values()) {
        if (v.rows() != rows || v.cols() != cols) {
            throw ConfigError(std::string("coefficient '") + name + "' must be " + std::to_string(rows) + "x" +
                              std::to_string(cols));
        }
    }
}

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

LQCoefficients ProblemSpec::at(double t) const {
    LQCoefficients c;
    c.A = A(t);
    c.B = B(t);
    c.C = C(t);
    c.D = D(t);
    c.b = b(t);
    c.sigma = sigma(t);
    c.Q = Q(t);
    c.R = R(t);
    return c;
}

std::vector<double> ProblemSpec::breakpoints() const {
    std::vector<double> out;
    append_breakpoints(out, A);
    append_breakpoints(out, B);
    append_breakpoints(out, C);
    append_breakpoints(out, D);
    append_breakpoints(out, b);
    append_breakpoints(out, sigma);
    append_breakpoints(out, Q);
    append_breakpoints(out, R);
    if (multistate) {
        append_breakpoints(out, multistate->A);
        append_breakpoints(out, multistate->Q);
        for (const auto& c : multistate->C) append_breakpoints(out, c);
    }
    return sorted_unique(std::move(out));
}

ProblemSpec finalize(ProblemSpec spec) {
    if (spec.grid.steps() == 0) throw ConfigError("time grid is empty");
    if (spec.state_dim < 1 || spec.control_dim < 1 || spec.noise_dim < 1) {
        throw ConfigError("dimensions n, l, d must be positive");
    }
    const double T = spec.grid.horizon();
    const int l = spec.control_dim;
    const int d = spec.noise_dim;
    require_cover(spec.A, T, "A");
    require_cover(spec.B, T, "B");
    require_cover(spec.C, T, "C");
    require_cover(spec.D, T, "D");
    require_cover(spec.b, T, "b");
    require_cover(spec.sigma, T, "sigma");
    require_cover(spec.Q, T, "Q");
    require_cover(spec.R, T, "R");
    require_vector(spec.B, l, "B");
    require_vector(spec.C, d, "C");
    require_matrix(spec.D, d, l, "D");
    require_vector(spec.sigma, d, "sigma");
    require_matrix(spec.R, l, l, "R");
    if (spec.state_dim > 1) {
        if (!spec.multistate) throw ConfigError("n > 1 requires matrix-valued state data");
        const int n = spec.state_dim;
        const auto& ms = *spec.multistate;
        require_cover(ms.A, T, "state.A");
        require_cover(ms.Q, T, "state.Q");
        require_matrix(ms.A, n, n, "state.A");
        require_matrix(ms.Q, n, n, "state.Q");
        if (static_cast<int>(ms.C.size()) != d) throw ConfigError("state.C needs one matrix per noise component");
        for (const auto& c : ms.C) {
            require_cover(c, T, "state.C");
            require_matrix(c, n, n, "state.C");
        }
        if (ms.G.rows() != n || ms.G.cols() != n) throw ConfigError("state.G must be n x n");
    }
    std::vector<double> inner;
    for (double t : spec.breakpoints()) {
        if (t > 0.0 && t < T) inner.push_back(t);
    }
    spec.grid = spec.grid.with_breakpoints(inner);
    return spec;
}

ProblemSpec constant_problem(const ConstantProblemData& data, double horizon, std::size_t steps) {
    ProblemSpec s;
    s.state_dim = 1;
    s.control_dim = static_cast<int>(data.B.size());
    s.noise_dim = static_cast<int>(data.C.size());
    s.A = ScalarPath::constant(data.A, horizon);
    s.B = VectorPath::constant(data.B, horizon);
    s.C = VectorPath::constant(data.C, horizon);
    s.D = MatrixPath::constant(data.D, horizon);
    s.b = ScalarPath::constant(data.b, horizon);
    s.sigma = VectorPath::constant(data.sigma, horizon);
    s.Q = ScalarPath::constant(data.Q, horizon);
    s.R = MatrixPath::constant(data.R, horizon);
    s.G = data.G;
    s.h = data.h;
    s.mu1 = data.mu1;
    s.mu2 = data.mu2;
    s.x0 = data.x0;
    s.grid = TimeGrid::uniform(horizon, steps);
    return finalize(std::move(s));
}

// ---------------------------------------------------------------------------

Eigen::VectorXd MarketSpec::theta(double t, double factor) const {
    if (const auto* det = std::get_if<DeterministicPremium>(&premium)) return det->theta(t);
    return std::get<OUFactorPremium>(premium).theta(factor);
}

const OUFactorPremium& MarketSpec::factor_model() const {
    const auto* ou = std::get_if<OUFactorPremium>(&premium);
    if (!ou) throw std::logic_error("market premium is deterministic");
    return *ou;
}

MarketSpec finalize(MarketSpec market) {
    if (market.grid.steps() == 0) throw ConfigError("time grid is empty");
    if (market.noise_dim < 1) throw ConfigError("noise dimension must be positive");
    const double T = market.grid.horizon();
    require_cover(market.r, T, "r");
    std::vector<double> bps;
    append_breakpoints(bps, market.r);
    if (auto* det = std::get_if<DeterministicPremium>(&market.premium)) {
        require_cover(det->theta, T, "theta");
        require_vector(det->theta, market.noise_dim, "theta");
        append_breakpoints(bps, det->theta);
    } else {
        const auto& ou = std::get<OUFactorPremium>(market.premium);
        if (ou.theta_bar.size() != market.noise_dim || ou.loading.size() != market.noise_dim) {
            throw ConfigError("factor premium theta_bar and loading must have length d");
        }
        if (ou.factor_component < 0 || ou.factor_component >= market.noise_dim) {
            throw ConfigError("factor_component out of range");
        }
    }
    if (market.volatility) {
        require_cover(*market.volatility, T, "volatility");
        require_matrix(*market.volatility, market.noise_dim, market.noise_dim, "volatility");
        append_breakpoints(bps, *market.volatility);
    }
    std::vector<double> inner;
    for (double t : sorted_unique(std::move(bps))) {
        if (t > 0.0 && t < T) inner.push_back(t);
    }
    market.grid = market.grid.with_breakpoints(inner);
    return market;
}

ProblemSpec as_problem(const MarketSpec& market) {
    const auto* det = std::get_if<DeterministicPremium>(&market.premium);
    if (!det) throw std::logic_error("as_problem requires a deterministic premium");
    const int d = market.noise_dim;
    const double T = market.grid.horizon();
    ProblemSpec s;
    s.state_dim = 1;
    s.control_dim = d;
    s.noise_dim = d;
    s.A = market.r;
    s.B = det->theta;
    s.C = VectorPath::constant(Eigen::VectorXd::Zero(d), T);
    s.D = MatrixPath::constant(Eigen::MatrixXd::Identity(d, d), T);
    s.b = ScalarPath::constant(0.0, T);
    s.sigma = VectorPath::constant(Eigen::VectorXd::Zero(d), T);
    s.Q = ScalarPath::constant(0.0, T);
    s.R = MatrixPath::constant(Eigen::MatrixXd::Zero(d, d), T);
    s.G = 1.0;
    s.h = 1.0;
    s.mu1 = market.mu1;
    s.mu2 = market.mu2;
    s.x0 = market.x0;
    s.grid = market.grid;
    return finalize(std::move(s));
}

// ---------------------------------------------------------------------------

std::string to_string(TheoremCase c) {
    switch (c) {
        case TheoremCase::proportional: return "(i)";
        case TheoremCase::nondegenerate: return "(ii)";
        case TheoremCase::singular: return "(iii)";
        case TheoremCase::none: break;
    }
    return "none";
}

std::vector<double> gamma1_closed_form(const ProblemSpec& spec) {
    auto g = numerics::exp_integral_to_horizon(spec.grid, [&](double t) { return spec.A(t); });
    for (double& v : g) v *= spec.mu1;
    g.back() = spec.mu1;
    return g;
}

namespace {

struct CaseFlags {
    bool r_definite = true;
    bool r_zero = true;
    bool dd_definite = true;
    bool mixed_condition = true;
    bool singular_conditions = true;
    bool proportional = true;
};

}  // namespace

ValidationResult validate_spec(const ProblemSpec& spec) {
    ValidationResult res;
    const auto& grid = spec.grid;
    auto add = [&](std::string what, std::optional<double> t = std::nullopt) {
        res.violations.push_back({std::move(what), t});
    };

    if (spec.G < 0.0) add("G >= 0 fails");
    if (!(spec.G >= spec.h && spec.h > 0.0)) add("G >= h > 0 fails");

    if (spec.state_dim > 1) {
        res.closed_form_only = true;
        if (spec.multistate) {
            const auto& ms = *spec.multistate;
            if (!is_symmetric(ms.G) || min_eigenvalue(ms.G) < kPsdFloor) add("G positive semi-definite fails");
            for (double t : grid.nodes()) {
                const Eigen::MatrixXd q = ms.Q(t);
                if (!is_symmetric(q) || min_eigenvalue(q) < kPsdFloor) {
                    add("Q positive semi-definite fails", t);
                    break;
                }
            }
        }
    }

    const auto gamma1 = gamma1_closed_form(spec);
    const int l = spec.control_dim;
    CaseFlags f;
    std::optional<double> lambda;
    bool first_q = true, first_rsym = true, first_rpsd = true;

    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        const LQCoefficients c = spec.at(t);

        if (c.Q < 0.0 && first_q) {
            add("Q >= 0 fails", t);
            first_q = false;
        }
        if (!is_symmetric(c.R) && first_rsym) {
            add("R symmetric fails", t);
            first_rsym = false;
        }
        const double r_min = min_eigenvalue(c.R);
        if (r_min < kPsdFloor && first_rpsd) {
            add("R positive semi-definite fails", t);
            first_rpsd = false;
        }

        const Eigen::MatrixXd DD = c.D.transpose() * c.D;
        const Eigen::VectorXd DC = c.D.transpose() * c.C;
        const double c2 = c.C.squaredNorm();

        f.r_definite = f.r_definite && r_min > kDefiniteness;
        f.r_zero = f.r_zero && c.R.cwiseAbs().maxCoeff() == 0.0;
        const double dd_min = min_eigenvalue(DD);
        f.dd_definite = f.dd_definite && dd_min > kDefiniteness;

        const Eigen::MatrixXd mixed =
            (c.Q * DD + c2 * c.R) / static_cast<double>(l) + gamma1[i] * symmetrize(DC * c.B.transpose());
        f.mixed_condition = f.mixed_condition && min_eigenvalue(mixed) >= kPsdFloor;

        if (dd_min > kDefiniteness) {
            const Eigen::LDLT<Eigen::MatrixXd> dd(DD);
            const Eigen::VectorXd y = dd.solve(c.B);
            const double s1 = c.Q + gamma1[i] * y.dot(c.B + DC);
            const double s2 = c.Q + gamma1[i] * y.dot(DC);
            f.singular_conditions = f.singular_conditions && s1 >= kPsdFloor && s2 >= kPsdFloor;
        } else {
            f.singular_conditions = false;
        }

        if (f.proportional) {
            const double scale = 1.0 + c.B.norm() + DC.norm();
            if (DC.norm() <= 1e-14) {
                if (c.B.norm() > 1e-12 * scale) f.proportional = false;
            } else {
                const double li = c.B.dot(DC) / DC.squaredNorm();
                if ((c.B - li * DC).norm() > 1e-10 * scale || li < -1e-12) {
                    f.proportional = false;
                } else if (!lambda) {
                    lambda = li;
                } else if (std::abs(li - *lambda) > 1e-9 * (1.0 + std::abs(*lambda))) {
                    f.proportional = false;
                }
            }
        }
    }
    if (f.proportional) res.proportionality = lambda.value_or(0.0);

    if (f.r_definite && f.mixed_condition && f.proportional) res.satisfied_cases.push_back(TheoremCase::proportional);
    if (f.r_definite && f.mixed_condition && f.dd_definite) res.satisfied_cases.push_back(TheoremCase::nondegenerate);
    if (f.r_zero && f.dd_definite && f.singular_conditions) res.satisfied_cases.push_back(TheoremCase::singular);
    if (!res.satisfied_cases.empty()) res.equilibrium_case = res.satisfied_cases.front();
    return res;
}

ValidationResult validate_market(const MarketSpec& market) {
    ValidationResult res;
    auto add = [&](std::string what, std::optional<double> t = std::nullopt) {
        res.violations.push_back({std::move(what), t});
    };
    if (market.mu1 < 0.0) add("mu1 >= 0 fails");
    if (const auto* det = std::get_if<DeterministicPremium>(&market.premium)) {
        if (det->theta.values().empty() || det->theta.end() < market.grid.horizon() * (1.0 - 1e-12)) {
            add("theta defined on [0, T] fails");
        }
    } else {
        const auto& ou = std::get<OUFactorPremium>(market.premium);
        if (ou.kappa < 0.0) add("kappa >= 0 fails");
        if (ou.vol < 0.0) add("factor volatility >= 0 fails");
    }
    if (market.volatility) {
        for (double t : market.grid.nodes()) {
            const Eigen::MatrixXd s = (*market.volatility)(t);
            if (std::abs(s.determinant()) < 1e-12) {
                add("volatility matrix invertible fails", t);
                break;
            }
        }
    }
    // The market is the singular (R = 0, D = I) instance of the LQ problem.
    if (res.ok()) {
        res.equilibrium_case = TheoremCase::singular;
        res.satisfied_cases = {TheoremCase::singular};
    }
    return res;
}

}  // namespace tilq
