#include "tilq/verification.hpp"

#include "path_kernel.hpp"
#include "tilq/errors.hpp"
#include "tilq/parallel.hpp"
#include "tilq/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tilq {

std::vector<ProbeDirection> default_directions(int control_dim) {
    std::vector<ProbeDirection> out;
    for (bool scaled : {false, true}) {
        for (int k = 0; k < control_dim; ++k) {
            for (double sign : {1.0, -1.0}) {
                ProbeDirection p;
                p.v = Eigen::VectorXd::Zero(control_dim);
                p.v[k] = sign;
                p.state_scaled = scaled;
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

void check_verify_config(const VerifyConfig& config, double horizon) {
    if (config.epsilons.empty()) throw ConfigError("verification: epsilon ladder is empty");
    for (std::size_t k = 0; k < config.epsilons.size(); ++k) {
        const double e = config.epsilons[k];
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("verification: epsilons are fractions of T in (0, 1)");
        if (k > 0 && !(e < config.epsilons[k - 1])) throw ConfigError("verification: epsilons must decrease");
    }
    for (double t : config.probe_times) {
        if (!(t >= 0.0 && t + config.epsilons.front() * horizon <= horizon * (1.0 + 1e-12))) {
            throw ConfigError("verification: probe time leaves no room for the largest epsilon");
        }
    }
    if (config.inner_paths < 100) throw ConfigError("verification: need at least 100 inner paths");
    if (!(config.tolerance >= 0.0)) throw ConfigError("verification: tolerance must be non-negative");
}

DiagonalModel lq_diagonal(const ProblemSpec& spec, const RiccatiResult& result, double detune) {
    DiagonalModel m;
    m.eval = [&spec, &result, detune](std::size_t i, double x, double, Eigen::VectorXd& lambda, Eigen::MatrixXd& H) {
        const RiccatiSolution& s = result.solution;
        const LQCoefficients co = spec.at(s.grid[i]);
        const double M = s.M[i];
        const Eigen::MatrixXd DtD = co.D.transpose() * co.D;
        const Eigen::VectorXd u = detune * result.policy.alpha[i] * x + result.policy.beta[i];
        lambda = (co.R + M * DtD) * u + (M - s.N[i] - s.Gamma1[i]) * co.B * x + M * co.D.transpose() * co.C * x +
                 s.Phi[i] * co.B + M * co.D.transpose() * co.sigma;
        H = result.adjoint.H[i];
    };
    return m;
}

DiagonalModel mv_diagonal(const MarketSpec& market, const MVAnsatzSolution& sol, const MVPolicy& policy) {
    DiagonalModel m;
    const std::vector<double> Rint = rate_integral(market);
    m.eval = [&market, &sol, &policy, Rint](std::size_t i, double x, double y, Eigen::VectorXd& lambda,
                                            Eigen::MatrixXd& H) {
        const Eigen::VectorXd theta = market.theta(sol.grid[i], y);
        const auto d = theta.size();
        double M = 0.0;
        Eigen::VectorXd U = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd g2 = Eigen::VectorXd::Zero(d);
        if (sol.deterministic) {
            M = sol.M[i];
            if (!sol.U.empty()) U = sol.U[i];
            if (!sol.gamma2.empty()) g2 = sol.gamma2[i];
        } else {
            M = std::max(sol.mu_regression->value(i, y), kMFloor);
            U = sol.mu_regression->z(i, y);
            g2 = sol.gamma2_regression->z(i, y);
        }
        const Eigen::VectorXd u = policy.control(i, x, y);
        lambda = (sol.Gamma[i] - sol.Gamma1[i] * x) * theta + x * U + M * u + g2;
        H = std::exp(2.0 * Rint[i]) * Eigen::MatrixXd::Identity(d, d);
    };
    return m;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "unknown";
}

std::size_t VerificationReport::count(Verdict v) const {
    return static_cast<std::size_t>(
        std::count_if(probes.begin(), probes.end(), [v](const ProbeResult& p) { return p.verdict == v; }));
}

namespace {

struct Outcome {
    std::vector<double> terminal;
    std::vector<double> running;

    explicit Outcome(std::size_t n) : terminal(n), running(n) {}
};

/// Mean of `psi` corrected by zero-mean control variates (columns of Z, fitted
/// by least squares) and the 99% half-width of the corrected mean. Antithetic
/// pairs are averaged first.
struct Adjusted {
    double shift = 0.0;  // subtract from the raw mean
    double ci = 0.0;
};

Adjusted control_adjusted(const std::vector<double>& psi, const Eigen::MatrixXd& Z, bool antithetic) {
    const auto n = static_cast<Eigen::Index>(antithetic ? psi.size() / 2 : psi.size());
    Eigen::VectorXd y(n);
    Eigen::MatrixXd X(n, Z.cols());
    for (Eigen::Index q = 0; q < n; ++q) {
        if (antithetic) {
            y[q] = 0.5 * (psi[static_cast<std::size_t>(2 * q)] + psi[static_cast<std::size_t>(2 * q + 1)]);
            if (Z.cols() > 0) X.row(q) = 0.5 * (Z.row(2 * q) + Z.row(2 * q + 1));
        } else {
            y[q] = psi[static_cast<std::size_t>(q)];
            if (Z.cols() > 0) X.row(q) = Z.row(q);
        }
    }
    const double nn = static_cast<double>(n);
    Adjusted a;
    Eigen::VectorXd resid = y.array() - y.mean();
    double dof = nn - 1.0;
    if (Z.cols() > 0) {
        const Eigen::RowVectorXd zbar = X.colwise().mean();
        X.rowwise() -= zbar;
        const Eigen::VectorXd beta = X.completeOrthogonalDecomposition().solve(resid);
        a.shift = zbar.dot(beta);
        resid -= X * beta;
        dof -= static_cast<double>(Z.cols());
    }
    a.ci = kZ99 * std::sqrt(resid.squaredNorm() / std::max(dof, 1.0) / nn);
    return a;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct Difference {
    double raw = 0.0;
    double value = 0.0;
    double ci = 0.0;
    std::vector<double> psi;
};

/// J(perturbed) - J(base) at (t, x_t) and its linearised per-path contributions.
Difference cost_difference(const Outcome& base, const Outcome& pert, const ControlledSystem& sys, double x_t,
                           const Eigen::MatrixXd& Z, bool antithetic) {
    const std::size_t N = base.terminal.size();
    const double n = static_cast<double>(N);
    const double m0 = mean_of(base.terminal);
    const double m1 = mean_of(pert.terminal);
    double s0 = 0.0, s1 = 0.0, q0 = 0.0, q1 = 0.0;
    for (std::size_t p = 0; p < N; ++p) {
        s0 += (base.terminal[p] - m0) * (base.terminal[p] - m0);
        s1 += (pert.terminal[p] - m1) * (pert.terminal[p] - m1);
        q0 += base.terminal[p] * base.terminal[p];
        q1 += pert.terminal[p] * pert.terminal[p];
    }
    s0 /= n - 1.0;
    s1 /= n - 1.0;
    const double w = sys.mu1 * x_t + sys.mu2;
    Difference d;
    d.value = 0.5 * (mean_of(pert.running) - mean_of(base.running)) + 0.5 * sys.G * (q1 - q0) / n -
              0.5 * sys.h * ((m1 * m1 - s1 / n) - (m0 * m0 - s0 / n)) - w * (m1 - m0);
    d.psi.resize(N);
    for (std::size_t p = 0; p < N; ++p) {
        const double x1 = pert.terminal[p];
        const double x0 = base.terminal[p];
        d.psi[p] = 0.5 * (pert.running[p] - base.running[p]) + 0.5 * sys.G * (x1 * x1 - x0 * x0) -
                   sys.h * (m1 * x1 - m0 * x0) - w * (x1 - x0);
    }
    const Adjusted adj = control_adjusted(d.psi, Z, antithetic);
    d.raw = d.value;
    d.value -= adj.shift;
    d.ci = adj.ci;
    return d;
}

struct Variant {
    std::size_t direction = 0;
    std::size_t eps_index = 0;
    SpikeMode mode = SpikeMode::replay;
    Spike spike;
};

std::uint64_t inner_index(std::size_t probe, std::size_t draw) {
    return (static_cast<std::uint64_t>(probe) << 40) | static_cast<std::uint64_t>(draw);
}

}  // namespace

VerificationReport equilibrium_ratio(const ControlledSystem& system, const AffineFeedback& policy,
                                     const DiagonalModel& diagonal, const VerifyConfig& config) {
    const TimeGrid& grid = system.grid();
    const double T = grid.horizon();
    const std::size_t n = grid.steps();
    const int d = system.noise_dim();
    const int l = system.control_dim();
    if (policy.dim() != l) throw ConfigError("policy dimension does not match the system");
    check_verify_config(config, T);
    std::vector<double> times = config.probe_times;
    if (times.empty()) times = {0.0, 0.25 * T, 0.5 * T};
    std::vector<ProbeDirection> dirs = config.directions;
    if (dirs.empty()) dirs = default_directions(l);
    for (const auto& dir : dirs) {
        if (dir.v.size() != l) throw ConfigError("verification: direction has wrong dimension");
    }
    const SpikeMode other = config.mode == SpikeMode::replay ? SpikeMode::feedback : SpikeMode::replay;

    VerificationReport report;
    report.mode = config.mode;
    std::size_t N = config.inner_paths;
    if (config.antithetic && N % 2 != 0) ++N;
    report.inner_paths = N;
    const std::size_t draws = config.antithetic ? N / 2 : N;

    for (std::size_t k = 0; k < times.size(); ++k) {
        const std::size_t it = grid.nearest_index(times[k]);
        if (it >= n) throw ConfigError("verification: probe time at the horizon");

        // outer scenario up to the probe node
        double x_t = system.x0;
        double y_t = system.y0;
        if (it > 0) {
            auto engine = make_engine(config.seed, Stream::outer, k);
            std::vector<double> dW;
            detail::draw_increments(engine, grid, 0, d, dW);
            detail::PathWorkspace ws;
            std::vector<double> states(n + 1);
            detail::prepare_path(system, policy, 0, system.y0, dW.data(), ws);
            detail::run_base(system, ws, 0, system.x0, dW.data(), states.data());
            x_t = states[it];
            y_t = ws.y[it];
        }

        std::vector<Eigen::VectorXd> v_eff(dirs.size());
        for (std::size_t j = 0; j < dirs.size(); ++j) v_eff[j] = dirs[j].state_scaled ? Eigen::VectorXd(x_t * dirs[j].v) : dirs[j].v;

        std::vector<Variant> variants;
        const std::size_t ne = config.epsilons.size();
        std::vector<double> eps_real(ne);
        std::vector<std::size_t> ends(ne);
        ControlLaw none;
        none.feedback = policy;
        for (std::size_t e = 0; e < ne; ++e) {
            const ControlLaw probe = spike_control(none, grid, grid[it], config.epsilons[e] * T, Eigen::VectorXd::Zero(l));
            const Spike& s = probe.spikes.front();
            eps_real[e] = grid[s.end] - grid[s.begin];
            ends[e] = s.end;
        }

        // Propagation of a unit state shock from node j + 1 to T along the
        // mean dynamics frozen at the probe factor value. Only the efficiency
        // of the control variates depends on it.
        std::vector<double> prop(n, 1.0);
        {
            SmallVec load, a, b;
            for (std::size_t i = n - 1; i > it; --i) {
                const StepCoefficients& c = system.step(i);
                system.loading(i, y_t, load);
                policy.eval(i, y_t, a, b);
                prop[i - 1] = prop[i] * (c.growth + c.dt * load.dot(a));
            }
        }
        for (std::size_t j = 0; j < dirs.size(); ++j) {
            for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
                Variant var;
                var.direction = j;
                var.eps_index = e;
                var.mode = config.mode;
                var.spike = spike_control(none, grid, grid[it], config.epsilons[e] * T, v_eff[j]).spikes.front();
                variants.push_back(var);
                if (config.compare_modes && e + 1 == config.epsilons.size()) {
                    var.mode = other;
                    variants.push_back(var);
                }
            }
        }

        // Control variates per epsilon: window increments W_q and W_q times
        // the adapted post-window integral sum_j prop_j vol_j' dW_j. Both have
        // mean zero exactly.
        Outcome base(N);
        std::vector<Outcome> pert(variants.size(), Outcome(N));
        std::vector<Eigen::MatrixXd> cv(ne, Eigen::MatrixXd(static_cast<Eigen::Index>(N), 2 * d));
        parallel_blocks(draws, [&](std::size_t lo, std::size_t hi) {
            detail::PathWorkspace ws;
            std::vector<double> z, dW;
            std::vector<Spike> one(1);
            std::vector<double> states(n - it + 1);
            std::vector<double> tail(n - it + 1);
            Eigen::VectorXd window(d);
            for (std::size_t j = lo; j < hi; ++j) {
                auto engine = make_engine(config.seed, Stream::inner, inner_index(k, j));
                detail::draw_increments(engine, grid, it, d, z);
                const int copies = config.antithetic ? 2 : 1;
                for (int c = 0; c < copies; ++c) {
                    const std::size_t p = config.antithetic ? 2 * j + static_cast<std::size_t>(c) : j;
                    dW = z;
                    if (c == 1) {
                        for (double& w : dW) w = -w;
                    }
                    detail::prepare_path(system, policy, it, y_t, dW.data(), ws);
                    const detail::PathResult r0 = detail::run_base(system, ws, it, x_t, dW.data(), states.data());
                    base.terminal[p] = r0.terminal;
                    base.running[p] = r0.running;
                    tail[n - it] = 0.0;
                    for (std::size_t i = n; i-- > it;) {
                        const StepCoefficients& sc = system.step(i);
                        const double* w = dW.data() + (i - it) * static_cast<std::size_t>(d);
                        double acc = 0.0;
                        for (int q = 0; q < d; ++q) {
                            double vol = sc.C[q] * states[i - it] + sc.sigma[q];
                            for (int a = 0; a < l; ++a) vol += sc.D(q, a) * ws.ustar[i][a];
                            acc += vol * w[q];
                        }
                        tail[i - it] = tail[i + 1 - it] + prop[i] * acc;
                    }
                    for (std::size_t e = 0; e < ne; ++e) {
                        window.setZero();
                        for (std::size_t i = it; i < ends[e]; ++i) {
                            for (int q = 0; q < d; ++q) window[q] += dW[(i - it) * static_cast<std::size_t>(d) + static_cast<std::size_t>(q)];
                        }
                        const auto row = static_cast<Eigen::Index>(p);
                        cv[e].row(row).head(d) = window.transpose();
                        cv[e].row(row).tail(d) = window.transpose() * tail[ends[e] - it];
                    }
                    for (std::size_t q = 0; q < variants.size(); ++q) {
                        one[0] = variants[q].spike;
                        const detail::PathResult r = detail::run_perturbed(system, ws, it, x_t, dW.data(), one, variants[q].mode);
                        pert[q].terminal[p] = r.terminal;
                        pert[q].running[p] = r.running;
                    }
                }
            }
        });

        Eigen::VectorXd lambda;
        Eigen::MatrixXd H;
        diagonal.eval(it, x_t, y_t, lambda, H);

        for (std::size_t j = 0; j < dirs.size(); ++j) {
            ProbeResult pr;
            pr.t = grid[it];
            pr.node = it;
            pr.direction = j;
            pr.v = v_eff[j];
            pr.x_t = x_t;
            pr.y_t = y_t;
            pr.predicted_first = lambda.dot(v_eff[j]);
            pr.predicted_second = 0.5 * v_eff[j].dot(H * v_eff[j]);
            std::vector<std::vector<double>> psi;
            std::vector<double> raw;
            std::vector<std::size_t> used;
            double other_ratio = 0.0;
            for (std::size_t q = 0; q < variants.size(); ++q) {
                const Variant& var = variants[q];
                if (var.direction != j) continue;
                const Difference diff = cost_difference(base, pert[q], system, x_t, cv[var.eps_index], config.antithetic);
                const double eps = eps_real[var.eps_index];
                if (var.mode != config.mode) {
                    other_ratio = diff.value / eps;
                    continue;
                }
                pr.epsilons.push_back(eps);
                pr.delta_J.push_back(diff.value);
                pr.delta_J_ci.push_back(diff.ci);
                pr.ratio.push_back(diff.value / eps);
                pr.ratio_ci.push_back(diff.ci / eps);
                raw.push_back(diff.raw / eps);
                psi.push_back(diff.psi);
                used.push_back(var.eps_index);
            }
            const std::size_t m = pr.ratio.size();
            if (m >= 2 && pr.epsilons[m - 2] > pr.epsilons[m - 1]) {
                const double e1 = pr.epsilons[m - 2];
                const double e2 = pr.epsilons[m - 1];
                std::vector<double> combo(N);
                for (std::size_t p = 0; p < N; ++p) {
                    combo[p] = (e1 * psi[m - 1][p] / e2 - e2 * psi[m - 2][p] / e1) / (e1 - e2);
                }
                Eigen::MatrixXd both(static_cast<Eigen::Index>(N), 4 * d);
                both << cv[used[m - 2]], cv[used[m - 1]];
                const Adjusted adj = control_adjusted(combo, both, config.antithetic);
                pr.extrapolated = (e1 * raw[m - 1] - e2 * raw[m - 2]) / (e1 - e2) - adj.shift;
                pr.extrapolated_ci = adj.ci;
            } else {
                pr.extrapolated = pr.ratio.back();
                pr.extrapolated_ci = pr.ratio_ci.back();
            }
            if (config.compare_modes) pr.mode_gap = std::abs(pr.ratio.back() - other_ratio);

            if (pr.extrapolated < -3.0 * pr.extrapolated_ci) {
                pr.verdict = Verdict::fail;
            } else if (pr.extrapolated_ci > std::abs(pr.extrapolated) + config.tolerance) {
                pr.verdict = Verdict::inconclusive;
            } else {
                pr.verdict = pr.predicted_second >= 0.0 ? Verdict::pass : Verdict::fail;
            }
            report.probes.push_back(std::move(pr));
        }
    }
    if (report.count(Verdict::fail) > 0) {
        report.overall = Verdict::fail;
    } else if (report.count(Verdict::inconclusive) > 0) {
        report.overall = Verdict::inconclusive;
    } else {
        report.overall = Verdict::pass;
    }
    return report;
}

ExpansionReport expansion_check(const VerificationReport& report) {
    ExpansionReport out;
    out.passed = !report.probes.empty();
    for (std::size_t k = 0; k < report.probes.size(); ++k) {
        const ProbeResult& p = report.probes[k];
        ExpansionProbe e;
        e.probe = k;
        e.slope = p.extrapolated;
        e.slope_ci = p.extrapolated_ci;
        e.predicted = p.predicted_first + p.predicted_second;
        e.slope_ok = std::abs(e.slope - e.predicted) <= 3.0 * e.slope_ci;
        for (std::size_t i = 0; i < p.epsilons.size(); ++i) {
            e.remainder.push_back(std::abs(p.delta_J[i] - p.epsilons[i] * e.predicted));
            e.remainder_ci.push_back(p.delta_J_ci[i]);
        }
        e.decay_ok = true;
        for (std::size_t i = 0; i + 1 < e.remainder.size(); ++i) {
            e.decay_ratio.push_back(e.remainder[i] / e.remainder[i + 1]);
            const double big = e.remainder[i] + 3.0 * e.remainder_ci[i];
            const double small = e.remainder[i + 1] - 3.0 * e.remainder_ci[i + 1];
            if (big < 1.5 * small) e.decay_ok = false;
        }
        out.passed = out.passed && e.slope_ok && e.decay_ok;
        out.probes.push_back(std::move(e));
    }
    return out;
}

ExpansionReport expansion_check(const ControlledSystem& system, const AffineFeedback& policy,
                                const DiagonalModel& diagonal, const VerifyConfig& config) {
    VerifyConfig c = config;
    c.compare_modes = false;
    return expansion_check(equilibrium_ratio(system, policy, diagonal, c));
}

LambdaResidual lambda_residual(const ProblemSpec& spec, const RiccatiSolution& sol, const PathBundle& bundle) {
    const std::size_t start = bundle.start_index;
    const auto N = bundle.X.rows();
    const double x_ref = bundle.start_state();
    LambdaResidual out;
    for (Eigen::Index c = 0; c < bundle.X.cols(); ++c) {
        const std::size_t s = start + static_cast<std::size_t>(c);
        const Eigen::VectorXd B = spec.at(sol.grid[s]).B;
        const Eigen::VectorXd col = bundle.X.col(c);
        const double cond_mean = x_ref + (col.array() - x_ref).sum() / static_cast<double>(N);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(B.size());
        double diag = 0.0;
        for (Eigen::Index p = 0; p < N; ++p) {
            const double w = sol.N[s] * (col[p] - cond_mean) + sol.Gamma1[s] * (col[p] - x_ref);
            acc += w * B;
            if (c == 0) diag = std::max(diag, std::abs(w) * B.norm());
        }
        if (c == 0) out.diagonal_max = diag;
        out.times.push_back(sol.grid[s]);
        out.mean_norm.push_back((acc / static_cast<double>(N)).norm());
    }
    return out;
}

LambdaDecay lambda_decay(const ProblemSpec& spec, const RiccatiResult& result, double t,
                         const std::vector<std::size_t>& ladder_steps, std::size_t paths, std::uint64_t seed) {
    const ControlledSystem system = ControlledSystem::from_problem(spec);
    ControlLaw law;
    law.feedback = AffineFeedback::from_lq(result.policy);
    const TimeGrid& grid = system.grid();
    const std::size_t it = grid.nearest_index(t);
    double x_t = system.x0;
    if (it > 0) {
        SimOptions outer;
        outer.paths = 1;
        outer.seed = seed + 1;
        x_t = simulate_state(system, law, outer).X(0, static_cast<Eigen::Index>(it));
    }
    SimOptions inner;
    inner.paths = paths;
    inner.seed = seed;
    inner.antithetic = true;
    inner.start_index = it;
    inner.start_state = x_t;
    const PathBundle bundle = simulate_state(system, law, inner);
    const LambdaResidual res = lambda_residual(spec, result.solution, bundle);

    LambdaDecay out;
    out.diagonal_max = res.diagonal_max;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t used = 0;
    for (std::size_t k : ladder_steps) {
        if (k == 0 || it + k > grid.steps()) throw ConfigError("lambda_decay: ladder step outside the horizon");
        const double delta = grid[it + k] - grid[it];
        const double value = res.mean_norm[k];
        out.deltas.push_back(delta);
        out.values.push_back(value);
        if (value > 0.0) {
            const double lx = std::log(delta), ly = std::log(value);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++used;
        }
    }
    if (used >= 2) {
        const double u = static_cast<double>(used);
        out.exponent = (u * sxy - sx * sy) / (u * sxx - sx * sx);
    } else {
        out.exponent = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace tilq
