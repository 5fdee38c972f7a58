#include "app.hpp"

#include "manifest.hpp"
#include "tilq/parallel.hpp"
#include "tilq/tilq.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace tilq::app {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Options {
    std::string command;
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> grid;
    std::string format = "csv";
    double detune = 1.0;
    std::optional<std::size_t> threads;
    std::vector<std::string> manifests;
};

/// Output directory plus the list of files written during the run.
class Run {
public:
    Run(const Options& o, std::ostream& log) : log_(log), dir_(o.out) {
        fs::create_directories(dir_);
        format_ = o.format == "json" ? OutputFormat::json : OutputFormat::csv;
    }

    void table(const Table& t, const std::string& stem) { record(write_table(t, dir_, stem, format_)); }

    void json(const ojson& j, const std::string& name) {
        const fs::path p = dir_ / name;
        write_text(p, j.dump(2) + "\n");
        record(p);
    }

    const std::vector<fs::path>& files() const { return files_; }
    const fs::path& dir() const { return dir_; }

private:
    void record(const fs::path& p) {
        files_.push_back(p);
        log_ << "wrote " << p.string() << "\n";
    }

    std::ostream& log_;
    fs::path dir_;
    OutputFormat format_ = OutputFormat::csv;
    std::vector<fs::path> files_;
};

ojson number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

ojson vec(const Eigen::VectorXd& v) {
    ojson a = ojson::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(number(v[k]));
    return a;
}

ojson vec(const std::vector<double>& v) {
    ojson a = ojson::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

ojson flags_json(const TruncationFlags& f) {
    return ojson{{"M_floor", f.M_floor}, {"M_cap", f.M_cap}, {"J_floor", f.J_floor}};
}

ojson validation_json(const ValidationResult& v) {
    ojson j;
    j["equilibrium_case"] = to_string(v.equilibrium_case);
    j["satisfied_cases"] = ojson::array();
    for (TheoremCase c : v.satisfied_cases) j["satisfied_cases"].push_back(to_string(c));
    j["proportionality"] = v.proportionality ? number(*v.proportionality) : ojson(nullptr);
    j["violations"] = ojson::array();
    for (const auto& x : v.violations) {
        j["violations"].push_back({{"assumption", x.assumption}, {"time", x.time ? number(*x.time) : ojson(nullptr)}});
    }
    return j;
}

ojson cost_json(const CostEstimate& c) {
    return ojson{{"value", number(c.value)},         {"ci99", number(c.ci)},
                 {"mean_terminal", number(c.mean_terminal)}, {"var_terminal", number(c.var_terminal)},
                 {"paths", c.paths}};
}

std::string describe(const std::vector<Violation>& vs) {
    std::string s;
    for (const auto& v : vs) {
        if (!s.empty()) s += "; ";
        s += v.assumption;
        if (v.time) s += " at t = " + format_double(*v.time);
    }
    return s;
}

RunConfig load(const Options& o) {
    RunConfig c = load_config(o.config);
    if (o.grid) set_grid_steps(c, *o.grid);
    if (o.seed) set_seed(c, *o.seed);
    return c;
}

const ProblemSpec& require_lq(const RunConfig& c, const std::string& cmd) {
    if (c.kind != RunKind::lq) throw ConfigError(cmd + " needs a config with kind = \"lq\"");
    return *c.problem;
}

const MarketSpec& require_mv(const RunConfig& c, const std::string& cmd) {
    if (c.kind != RunKind::mv) throw ConfigError(cmd + " needs a config with kind = \"mv\"");
    const ValidationResult v = validate_market(*c.market);
    if (!v.ok()) throw AssumptionViolation(describe(v.violations));
    return *c.market;
}

/// Sample paths under `law` from (0, x0): writes paths_sample and returns J(0, x0).
CostEstimate sample_paths(Run& run, const RunConfig& c, const ControlledSystem& sys, const ControlLaw& law) {
    SimOptions so;
    so.paths = c.simulation.paths;
    so.seed = c.simulation.seed;
    so.antithetic = c.simulation.antithetic;
    const PathBundle bundle = simulate_state(sys, law, so);
    run.table(paths_table(bundle, c.simulation.sample_paths, c.simulation.sample_stride), "paths_sample");
    return estimate_cost(bundle, sys);
}

ojson mv_summary(const MVPolicy& policy, const MVAnsatzSolution& sol) {
    ojson j;
    j["premium"] = sol.deterministic ? "deterministic" : "factor";
    j["identity_gap"] = number(policy.identity_gap());
    j["floored_divisions"] = policy.floored_divisions();
    return j;
}

struct MVSolved {
    MVAnsatzSolution sol;
    MVPolicy policy;
    ojson diagnostics;
};

ojson regression_json(const RegressionBSDESolution& r) {
    double cond = 1.0;
    for (const auto& s : r.steps) cond = std::max(cond, s.condition);
    return ojson{{"degree", r.degree},
                 {"max_condition", number(cond)},
                 {"floored_nodes", r.floored},
                 {"nodes_total", r.nodes_total},
                 {"floored_fraction", number(r.floored_fraction())},
                 {"picard_passes", r.picard_passes},
                 {"integrand_zero_score", number(integrand_zero_score(r))}};
}

/// Constant deterministic premium recast as a degenerate factor model so the
/// regression solver can run on it.
MarketSpec as_factor_market(const MarketSpec& m) {
    if (!m.deterministic_premium()) return m;
    const auto& theta = std::get<DeterministicPremium>(m.premium).theta;
    if (!theta.is_constant()) throw AssumptionViolation("the regression solver needs a constant or factor-driven premium");
    MarketSpec f = m;
    OUFactorPremium ou;
    ou.theta_bar = theta(0.0);
    ou.loading = Eigen::VectorXd::Zero(m.noise_dim);
    f.premium = ou;
    return f;
}

MVSolved solve_market(const RunConfig& c, const MarketSpec& market) {
    MVSolved s;
    if (market.deterministic_premium()) {
        s.sol = det_premium_solution(market);
        s.policy = det_premium_policy(market);
        s.diagnostics["M_closed_vs_ode"] = number(numerics::sup_abs_diff(det_premium_M(market), det_premium_M_ode(market)));
        return s;
    }
    const FactorPaths factors = simulate_factor(market.factor_model(), market.grid, c.bsde.paths, c.simulation.seed,
                                                market.noise_dim, c.bsde.antithetic);
    const IncrementCheck inc = check_increments(factors);
    if (inc.evaluated && !inc.passed) throw NumericalError("Brownian increment sanity gate failed");
    s.sol = regression_solution(market, factors, BasisSpec{c.bsde.degree});
    s.policy = assemble_policy(market, s.sol);
    s.diagnostics["M_regression"] = regression_json(*s.sol.mu_regression);
    s.diagnostics["Gamma2_regression"] = regression_json(*s.sol.gamma2_regression);
    s.diagnostics["bsde_paths"] = factors.paths();
    return s;
}

int solve_lq(const Options& o, Run& run, ojson& summary) {
    const RunConfig c = load(o);
    const ProblemSpec& spec = require_lq(c, "solve-lq");
    const RiccatiResult res = solve_riccati(spec, c.truncation);
    run.table(riccati_table(res.solution), "riccati");
    run.table(policy_table(res.policy), "policy");

    const ControlledSystem sys = ControlledSystem::from_problem(spec);
    ControlLaw law;
    law.feedback = AffineFeedback::from_lq(res.policy);
    const CostEstimate cost = sample_paths(run, c, sys, law);

    const RiccatiSolution& sol = res.solution;
    ojson rep;
    rep["validation"] = validation_json(res.validation);
    rep["route"] = sol.route == MJRoute::standard ? "standard" : "singular";
    ojson tr;
    tr["c"] = number(sol.truncation.c);
    tr["K"] = number(sol.truncation.K);
    tr["binding"] = flags_json(sol.truncation.binding);
    tr["history"] = ojson::array();
    for (const auto& r : sol.truncation.history) {
        tr["history"].push_back({{"c", number(r.c)}, {"K", number(r.K)}, {"flags", flags_json(r.flags)}});
    }
    rep["truncation"] = tr;
    double lambda_diag = 0.0;
    for (const auto& v : res.adjoint.lambda_diagonal_residual) lambda_diag = std::max(lambda_diag, v.cwiseAbs().maxCoeff());
    rep["residuals"] = {{"alpha_identity", number(res.policy.alpha_residual_sup())},
                        {"beta_identity", number(res.policy.beta_residual_sup())},
                        {"lambda_diagonal", number(lambda_diag)}};
    rep["route_gap"] = number(res.route_gap);
    rep["gamma1_gap"] = number(res.gamma1_gap);
    rep["eta"] = number(sol.eta);
    rep["terminal"] = {{"M", number(sol.M.back())}, {"N", number(sol.N.back())}, {"J", number(sol.J.back())}};
    rep["min_H_eigenvalue"] = number(res.adjoint.min_H_eigenvalue);
    rep["cost_at_start"] = cost_json(cost);
    run.json(rep, "solve_report.json");
    summary["theorem_case"] = to_string(res.validation.equilibrium_case);
    return kOk;
}

int solve_mv(const Options& o, Run& run, ojson& summary) {
    RunConfig c = load(o);
    if (o.paths) c.simulation.paths = *o.paths;
    const MarketSpec& market = require_mv(c, "solve-mv");
    const MVSolved s = solve_market(c, market);
    run.table(mv_policy_table(s.policy, s.sol), "mv_policy");
    if (!s.sol.deterministic) run.table(bsde_table(s.sol), "mv_policy_basis");

    const ControlledSystem sys = ControlledSystem::from_market(market);
    ControlLaw law;
    law.feedback = AffineFeedback::from_mv(s.policy);
    const CostEstimate cost = sample_paths(run, c, sys, law);

    ojson rep = mv_summary(s.policy, s.sol);
    rep["diagnostics"] = s.diagnostics;
    rep["cost_at_start"] = cost_json(cost);
    run.json(rep, "mv_report.json");
    summary["premium"] = rep["premium"];
    return kOk;
}

int solve_bsde(const Options& o, Run& run, ojson& summary) {
    RunConfig c = load(o);
    if (o.paths) c.bsde.paths = *o.paths;
    const MarketSpec market = as_factor_market(require_mv(c, "solve-bsde"));
    const FactorPaths factors = simulate_factor(market.factor_model(), market.grid, c.bsde.paths, c.simulation.seed,
                                                market.noise_dim, c.bsde.antithetic);
    const IncrementCheck inc = check_increments(factors);
    if (inc.evaluated && !inc.passed) throw NumericalError("Brownian increment sanity gate failed");
    const MVAnsatzSolution sol = regression_solution(market, factors, BasisSpec{c.bsde.degree});
    run.table(bsde_table(sol), "bsde_solution");

    ojson rep;
    rep["paths"] = factors.paths();
    rep["increment_check"] = {{"evaluated", inc.evaluated},
                              {"passed", inc.passed},
                              {"worst_mean", number(inc.worst_mean)},
                              {"worst_variance", number(inc.worst_variance)}};
    rep["M_regression"] = regression_json(*sol.mu_regression);
    rep["Gamma2_regression"] = regression_json(*sol.gamma2_regression);
    rep["M_mean_path"] = vec(mean_value_path(*sol.mu_regression, factors));
    if (c.market->deterministic_premium()) {
        const std::vector<double> closed = det_premium_M(*c.market);
        const std::vector<double> reg = mean_value_path(*sol.mu_regression, factors);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < closed.size(); ++i) {
            num = std::max(num, std::abs(reg[i] - closed[i]));
            den = std::max(den, std::abs(closed[i]));
        }
        rep["M_relative_error_vs_closed_form"] = number(num / den);
    }
    run.json(rep, "bsde_report.json");
    summary["paths"] = factors.paths();
    return kOk;
}

ojson verification_json(const VerificationReport& r, const ExpansionReport& e) {
    ojson j;
    j["overall"] = to_string(r.overall);
    j["mode"] = r.mode == SpikeMode::replay ? "replay" : "feedback";
    j["inner_paths"] = r.inner_paths;
    j["counts"] = {{"pass", r.count(Verdict::pass)},
                   {"fail", r.count(Verdict::fail)},
                   {"inconclusive", r.count(Verdict::inconclusive)}};
    j["probes"] = ojson::array();
    for (std::size_t k = 0; k < r.probes.size(); ++k) {
        const ProbeResult& p = r.probes[k];
        ojson q;
        q["t"] = number(p.t);
        q["v_index"] = p.direction;
        q["v"] = vec(p.v);
        q["x_t"] = number(p.x_t);
        q["y_t"] = number(p.y_t);
        q["extrapolated_ratio"] = number(p.extrapolated);
        q["ci99"] = number(p.extrapolated_ci);
        q["predicted_first_order"] = number(p.predicted_first);
        q["predicted_second_order"] = number(p.predicted_second);
        q["replay_feedback_gap"] = number(p.mode_gap);
        q["verdict"] = to_string(p.verdict);
        if (k < e.probes.size()) {
            const ExpansionProbe& x = e.probes[k];
            q["expansion"] = {{"slope_ok", x.slope_ok},
                              {"decay_ok", x.decay_ok},
                              {"remainder", vec(x.remainder)},
                              {"remainder_ci99", vec(x.remainder_ci)},
                              {"decay_ratio", vec(x.decay_ratio)}};
        }
        j["probes"].push_back(std::move(q));
    }
    j["expansion_passed"] = e.passed;
    return j;
}

int verdict_code(Verdict v) {
    switch (v) {
        case Verdict::pass: return kOk;
        case Verdict::fail: return kVerificationFail;
        case Verdict::inconclusive: return kInconclusive;
    }
    return kNumerical;
}

int verify(const Options& o, Run& run, ojson& summary) {
    RunConfig c = load(o);
    if (o.paths) c.verification.inner_paths = *o.paths;
    if (!(o.detune > 0.0)) throw ConfigError("--detune must be positive");
    check_verify_config(c.verification, c.horizon);

    VerificationReport report;
    ojson extra;
    ControlLaw law;
    std::optional<ControlledSystem> sys;
    if (c.kind == RunKind::lq) {
        const ProblemSpec& spec = *c.problem;
        const RiccatiResult res = solve_riccati(spec, c.truncation);
        sys = ControlledSystem::from_problem(spec);
        law.feedback = AffineFeedback::from_lq(res.policy).detuned(o.detune);
        report = equilibrium_ratio(*sys, law.feedback, lq_diagonal(spec, res, o.detune), c.verification);
        const LambdaDecay ld = lambda_decay(spec, res, c.lambda.t, c.lambda.ladder_steps, c.lambda.paths, c.simulation.seed);
        extra["lambda_decay"] = {{"t", number(c.lambda.t)},
                                 {"deltas", vec(ld.deltas)},
                                 {"values", vec(ld.values)},
                                 {"exponent", number(ld.exponent)},
                                 {"diagonal_max", number(ld.diagonal_max)}};
    } else {
        const MarketSpec& market = require_mv(c, "verify");
        const MVSolved s = solve_market(c, market);
        const MVPolicy policy = s.policy.detuned(o.detune);
        sys = ControlledSystem::from_market(market);
        law.feedback = AffineFeedback::from_mv(policy);
        report = equilibrium_ratio(*sys, law.feedback, mv_diagonal(market, s.sol, policy), c.verification);
        extra["solve"] = s.diagnostics;
    }
    const ExpansionReport expansion = expansion_check(report);
    run.table(verification_table(report), "verification");
    sample_paths(run, c, *sys, law);

    ojson rep = verification_json(report, expansion);
    rep["detune"] = number(o.detune);
    for (auto it = extra.begin(); it != extra.end(); ++it) rep[it.key()] = it.value();
    run.json(rep, "verify_report.json");
    summary["verdict"] = to_string(report.overall);
    return verdict_code(report.overall);
}

int report(const Options& o, Run& run, ojson& summary) {
    if (o.manifests.empty()) throw ConfigError("report needs at least one manifest or run directory");
    ojson rep;
    rep["runs"] = ojson::array();
    bool all_ok = true;
    for (const std::string& m : o.manifests) {
        fs::path p = m;
        if (fs::is_directory(p)) p /= "manifest.json";
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open manifest " + p.string());
        ojson man;
        try {
            man = ojson::parse(in);
        } catch (const ojson::parse_error& e) {
            throw ConfigError("malformed manifest " + p.string() + ": " + e.what());
        }
        ojson entry;
        entry["manifest"] = p.string();
        for (const char* key : {"subcommand", "seed", "config", "config_sha256", "exit_code", "summary"}) {
            if (man.contains(key)) entry[key] = man[key];
        }
        bool ok = true;
        ojson files = ojson::array();
        for (const auto& f : man.value("outputs", ojson::array())) {
            const fs::path file = p.parent_path() / f.at("file").get<std::string>();
            const bool present = fs::exists(file);
            const bool match = present && sha256_file(file) == f.at("sha256").get<std::string>();
            ok = ok && match;
            files.push_back({{"file", f.at("file")}, {"checksum_ok", match}});
        }
        entry["outputs"] = files;
        entry["checksums_ok"] = ok;
        all_ok = all_ok && ok;
        rep["runs"].push_back(std::move(entry));
    }
    rep["all_checksums_ok"] = all_ok;
    run.json(rep, "report.json");
    summary["runs"] = o.manifests.size();
    if (!all_ok) throw ConfigError("checksum mismatch in collated manifests");
    return kOk;
}

void write_manifest(const Options& o, const Run& run, const ojson& summary, int code, double seconds) {
    ojson m;
    m["tool"] = "tilq";
    m["version"] = TILQ_VERSION;
    m["subcommand"] = o.command;
    if (!o.config.empty()) {
        m["config"] = o.config;
        m["config_sha256"] = sha256_file(o.config);
    }
    if (o.seed) m["seed"] = *o.seed;
    m["overrides"] = {{"paths", o.paths ? ojson(*o.paths) : ojson(nullptr)},
                      {"grid", o.grid ? ojson(*o.grid) : ojson(nullptr)},
                      {"format", o.format},
                      {"detune", o.detune}};
    m["exit_code"] = code;
    m["summary"] = summary;
    m["wall_clock_seconds"] = seconds;
    m["outputs"] = ojson::array();
    for (const fs::path& f : run.files()) {
        m["outputs"].push_back({{"file", f.filename().string()}, {"sha256", sha256_file(f)}});
    }
    write_text(run.dir() / "manifest.json", m.dump(2) + "\n");
}

int category_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return kConfig;
        case ErrorCategory::assumption_violation: return kAssumption;
        case ErrorCategory::numerical: return kNumerical;
        case ErrorCategory::inconclusive_verification: return kInconclusive;
    }
    return kNumerical;
}

const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return "config";
        case ErrorCategory::assumption_violation: return "assumption-violation";
        case ErrorCategory::numerical: return "numerical";
        case ErrorCategory::inconclusive_verification: return "inconclusive-verification";
    }
    return "numerical";
}

int execute(const Options& o, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    try {
        if (o.threads) set_max_threads(*o.threads);
        Run run(o, out);
        ojson summary = ojson::object();
        int code = kOk;
        if (o.command == "solve-lq") {
            code = solve_lq(o, run, summary);
        } else if (o.command == "solve-mv") {
            code = solve_mv(o, run, summary);
        } else if (o.command == "solve-bsde") {
            code = solve_bsde(o, run, summary);
        } else if (o.command == "verify") {
            code = verify(o, run, summary);
        } else {
            code = report(o, run, summary);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(o, run, summary, code, secs);
        if (code == kVerificationFail) err << "verification: at least one probe failed\n";
        if (code == kInconclusive) err << "error[inconclusive-verification]: confidence intervals too wide for a verdict\n";
        return code;
    } catch (const Error& e) {
        err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
        return category_code(e.category());
    } catch (const std::invalid_argument& e) {
        err << "error[config]: " << e.what() << "\n";
        return kConfig;
    } catch (const fs::filesystem_error& e) {
        err << "error[config]: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        err << "error[numerical]: " << e.what() << "\n";
        return kNumerical;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Equilibrium solver and verifier for time-inconsistent linear-quadratic control", "tilq"};
    app.require_subcommand(1);
    app.set_version_flag("--version", TILQ_VERSION);
    Options o;
    std::size_t threads = 0;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* cfg = sub->add_option("--config", o.config, "Run configuration (.toml or .json)")->check(CLI::ExistingFile);
        if (needs_config) cfg->required();
        sub->add_option("--out", o.out, "Output directory")->capture_default_str();
        sub->add_option("--format", o.format, "Table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
        sub->add_option("--threads", threads, "Worker thread cap (0 = hardware)");
    };
    auto sim = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "Master seed (overrides simulation.seed)");
        sub->add_option("--paths", o.paths, "Path count override");
        sub->add_option("--grid", o.grid, "Uniform step count override");
    };

    CLI::App* lq = app.add_subcommand("solve-lq", "Riccati pipeline: riccati, policy and sample paths");
    common(lq, true);
    sim(lq);
    CLI::App* mv = app.add_subcommand("solve-mv", "Mean-variance equilibrium policy");
    common(mv, true);
    sim(mv);
    CLI::App* bs = app.add_subcommand("solve-bsde", "Regression BSDE solver only");
    common(bs, true);
    sim(bs);
    CLI::App* vf = app.add_subcommand("verify", "Spike-variation equilibrium check on a solved policy");
    common(vf, true);
    sim(vf);
    vf->add_option("--detune", o.detune, "Scale the feedback coefficient alpha")->capture_default_str();
    CLI::App* rp = app.add_subcommand("report", "Collate run manifests and re-check their checksums");
    common(rp, false);
    rp->add_option("manifests", o.manifests, "Manifest files or run directories")->required();

    std::vector<std::string> rev;
    for (std::size_t k = args.size(); k > 1; --k) rev.push_back(args[k - 1]);
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    for (CLI::App* sub : {lq, mv, bs, vf, rp}) {
        if (sub->parsed()) o.command = sub->get_name();
    }
    if (threads > 0) o.threads = threads;
    return execute(o, out, err);
}

}  // namespace tilq::app
