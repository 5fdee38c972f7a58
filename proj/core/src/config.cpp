#include "tilq/config.hpp"

#include "tilq/errors.hpp"

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace tilq {

using nlohmann::json;

namespace {

/// Object view that records which keys were read so leftovers can be rejected.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + " must be a table");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError("missing key " + where(key));
        seen_.insert(key);
        return j_.at(key);
    }

    const json* find(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    double number(const std::string& key, double fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
        return v->get<double>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer() || v->get<long long>() < 0) {
            throw ConfigError(where(key) + " must be a non-negative integer");
        }
        return v->get<std::uint64_t>();
    }

    bool flag(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
        return v->get<std::string>();
    }

    Section sub(const std::string& key) { return Section(at(key), where(key)); }

    std::string where(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

bool all_numbers(const json& a) {
    if (!a.is_array()) return false;
    for (const auto& x : a) {
        if (!x.is_number()) return false;
    }
    return true;
}

double as_number(const json& v, const std::string& name) {
    if (!v.is_number()) throw ConfigError(name + ": expected a number");
    return v.get<double>();
}

Eigen::VectorXd as_vector(const json& v, int dim, const std::string& name) {
    if (v.is_number() && dim == 1) return Eigen::VectorXd::Constant(1, v.get<double>());
    if (!all_numbers(v) || static_cast<int>(v.size()) != dim) {
        throw ConfigError(name + ": expected " + std::to_string(dim) + " numbers");
    }
    Eigen::VectorXd out(dim);
    for (int i = 0; i < dim; ++i) out[i] = v[static_cast<std::size_t>(i)].get<double>();
    return out;
}

bool is_matrix(const json& v, int rows, int cols) {
    if (!v.is_array() || static_cast<int>(v.size()) != rows) return false;
    for (const auto& row : v) {
        if (!all_numbers(row) || static_cast<int>(row.size()) != cols) return false;
    }
    return true;
}

Eigen::MatrixXd as_matrix(const json& v, int rows, int cols, const std::string& name) {
    if (v.is_number() && rows == 1 && cols == 1) return Eigen::MatrixXd::Constant(1, 1, v.get<double>());
    if (!is_matrix(v, rows, cols)) {
        throw ConfigError(name + ": expected a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    }
    Eigen::MatrixXd out(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int k = 0; k < cols; ++k) out(i, k) = v[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
    return out;
}

template <class Value, class Convert>
CoefficientPath<Value> pieces(const json& v, const std::string& name, Convert convert) {
    std::vector<double> times;
    std::vector<Value> values;
    for (const auto& p : v) {
        if (!p.is_array() || p.size() != 2) throw ConfigError(name + ": piecewise entries are [time, value] pairs");
        times.push_back(as_number(p[0], name));
        values.push_back(convert(p[1]));
    }
    try {
        return CoefficientPath<Value>::piecewise(std::move(times), std::move(values));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

ScalarPath scalar_path(const json* v, double T, const std::string& name, double fallback) {
    if (!v) return ScalarPath::constant(fallback, T);
    if (v->is_number()) return ScalarPath::constant(v->get<double>(), T);
    if (!v->is_array()) throw ConfigError(name + ": expected a number or [time, value] pairs");
    return pieces<double>(*v, name, [&](const json& x) { return as_number(x, name); });
}

VectorPath vector_path(const json* v, int dim, double T, const std::string& name) {
    if (!v) return VectorPath::constant(Eigen::VectorXd::Zero(dim), T);
    if (v->is_number() || all_numbers(*v)) return VectorPath::constant(as_vector(*v, dim, name), T);
    if (!v->is_array()) throw ConfigError(name + ": expected a vector or [time, value] pairs");
    return pieces<Eigen::VectorXd>(*v, name, [&](const json& x) { return as_vector(x, dim, name); });
}

MatrixPath matrix_path(const json* v, int rows, int cols, double T, const std::string& name) {
    if (!v) return MatrixPath::constant(Eigen::MatrixXd::Zero(rows, cols), T);
    if (v->is_number() || is_matrix(*v, rows, cols)) return MatrixPath::constant(as_matrix(*v, rows, cols, name), T);
    if (!v->is_array()) throw ConfigError(name + ": expected a matrix or [time, value] pairs");
    return pieces<Eigen::MatrixXd>(*v, name, [&](const json& x) { return as_matrix(x, rows, cols, name); });
}

int dimension(Section& s, const std::string& key) {
    const std::uint64_t v = s.count(key, 1);
    if (v < 1 || v > 8) throw ConfigError(s.where(key) + " must be between 1 and 8");
    return static_cast<int>(v);
}

ProblemSpec parse_problem(Section s, double T, std::size_t steps) {
    ProblemSpec p;
    p.control_dim = dimension(s, "control_dim");
    p.noise_dim = dimension(s, "noise_dim");
    const int l = p.control_dim;
    const int d = p.noise_dim;
    p.A = scalar_path(s.find("A"), T, "problem.A", 0.0);
    p.B = vector_path(s.find("B"), l, T, "problem.B");
    p.C = vector_path(s.find("C"), d, T, "problem.C");
    p.D = matrix_path(s.find("D"), d, l, T, "problem.D");
    p.b = scalar_path(s.find("b"), T, "problem.b", 0.0);
    p.sigma = vector_path(s.find("sigma"), d, T, "problem.sigma");
    p.Q = scalar_path(s.find("Q"), T, "problem.Q", 0.0);
    p.R = matrix_path(s.find("R"), l, l, T, "problem.R");
    p.G = s.number("G", 1.0);
    p.h = s.number("h", 1.0);
    p.mu1 = s.number("mu1", 0.0);
    p.mu2 = s.number("mu2", 0.0);
    p.x0 = s.number("x0", 1.0);
    s.done();
    p.grid = TimeGrid::uniform(T, steps);
    return finalize(std::move(p));
}

MarketSpec parse_market(Section s, double T, std::size_t steps) {
    MarketSpec m;
    m.noise_dim = dimension(s, "noise_dim");
    const int d = m.noise_dim;
    m.r = scalar_path(s.find("r"), T, "market.r", 0.0);
    m.mu1 = s.number("mu1", 0.0);
    m.mu2 = s.number("mu2", 0.0);
    m.x0 = s.number("x0", 1.0);
    const bool has_theta = s.has("theta");
    const bool has_factor = s.has("factor");
    if (has_theta == has_factor) throw ConfigError("market needs exactly one of theta or [market.factor]");
    if (has_theta) {
        m.premium = DeterministicPremium{vector_path(s.find("theta"), d, T, "market.theta")};
    } else {
        Section f = s.sub("factor");
        OUFactorPremium ou;
        ou.kappa = f.number("kappa", 0.0);
        ou.mean = f.number("mean", 0.0);
        ou.vol = f.number("vol", 0.0);
        ou.y0 = f.number("y0", 0.0);
        ou.theta_bar = as_vector(f.at("theta_bar"), d, "market.factor.theta_bar");
        ou.loading = as_vector(f.at("loading"), d, "market.factor.loading");
        ou.factor_component = static_cast<int>(f.count("component", 0));
        f.done();
        m.premium = ou;
    }
    if (const json* v = s.find("volatility")) m.volatility = matrix_path(v, d, d, T, "market.volatility");
    s.done();
    m.grid = TimeGrid::uniform(T, steps);
    return finalize(std::move(m));
}

void parse_verification(Section s, VerifyConfig& v, int control_dim) {
    if (const json* e = s.find("epsilons")) {
        if (!all_numbers(*e)) throw ConfigError("verification.epsilons must be a list of numbers");
        v.epsilons = e->get<std::vector<double>>();
    }
    if (const json* t = s.find("probe_times")) {
        if (!all_numbers(*t)) throw ConfigError("verification.probe_times must be a list of numbers");
        v.probe_times = t->get<std::vector<double>>();
    }
    if (const json* dirs = s.find("directions")) {
        if (!dirs->is_array()) throw ConfigError("verification.directions must be a list of tables");
        for (std::size_t k = 0; k < dirs->size(); ++k) {
            Section ds((*dirs)[k], "verification.directions[" + std::to_string(k) + "]");
            ProbeDirection p;
            p.v = as_vector(ds.at("v"), control_dim, ds.where("v"));
            p.state_scaled = ds.flag("state_scaled", false);
            ds.done();
            v.directions.push_back(std::move(p));
        }
    }
    v.inner_paths = s.count("inner_paths", v.inner_paths);
    v.antithetic = s.flag("antithetic", v.antithetic);
    const std::string mode = s.text("mode", "replay");
    if (mode == "replay") {
        v.mode = SpikeMode::replay;
    } else if (mode == "feedback") {
        v.mode = SpikeMode::feedback;
    } else {
        throw ConfigError("verification.mode must be \"replay\" or \"feedback\"");
    }
    v.compare_modes = s.flag("compare_modes", v.compare_modes);
    v.tolerance = s.number("tolerance", v.tolerance);
    s.done();
}

json toml_to_json(std::string_view text) {
    toml::table table;
    try {
        table = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
    std::ostringstream os;
    os << toml::json_formatter{table};
    return json::parse(os.str());
}

}  // namespace

std::string to_string(RunKind kind) { return kind == RunKind::lq ? "lq" : "mv"; }

RunConfig parse_config(std::string_view text, ConfigFormat format) {
    json root;
    if (format == ConfigFormat::toml) {
        root = toml_to_json(text);
    } else {
        try {
            root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("JSON parse error: ") + e.what());
        }
    }
    Section s(root, "");
    RunConfig c;
    if (!s.has("schema_version")) throw ConfigError("missing key schema_version");
    c.schema_version = static_cast<int>(s.count("schema_version", 0));
    if (c.schema_version != kSchemaVersion) {
        throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
    }
    const std::string kind = s.text("kind", "");
    if (kind == "lq") {
        c.kind = RunKind::lq;
    } else if (kind == "mv") {
        c.kind = RunKind::mv;
    } else {
        throw ConfigError("kind must be \"lq\" or \"mv\"");
    }
    {
        Section g = s.sub("grid");
        c.horizon = g.number("horizon", 1.0);
        c.steps = g.count("steps", 100);
        g.done();
        if (!(c.horizon > 0.0)) throw ConfigError("grid.horizon must be positive");
        if (c.steps < 1) throw ConfigError("grid.steps must be positive");
    }
    int control_dim = 1;
    if (c.kind == RunKind::lq) {
        if (s.has("market")) throw ConfigError("kind = \"lq\" takes a [problem] table, not [market]");
        c.problem = parse_problem(s.sub("problem"), c.horizon, c.steps);
        control_dim = c.problem->control_dim;
    } else {
        if (s.has("problem")) throw ConfigError("kind = \"mv\" takes a [market] table, not [problem]");
        c.market = parse_market(s.sub("market"), c.horizon, c.steps);
        control_dim = c.market->noise_dim;
    }
    if (s.has("truncation")) {
        Section t = s.sub("truncation");
        if (t.has("c0")) c.truncation.c0 = t.number("c0", 0.0);
        if (t.has("K0")) c.truncation.K0 = t.number("K0", 0.0);
        c.truncation.factor = t.number("factor", c.truncation.factor);
        c.truncation.max_rounds = static_cast<int>(t.count("max_rounds", static_cast<std::uint64_t>(c.truncation.max_rounds)));
        t.done();
    }
    if (s.has("simulation")) {
        Section m = s.sub("simulation");
        c.simulation.paths = m.count("paths", c.simulation.paths);
        c.simulation.seed = m.count("seed", c.simulation.seed);
        c.simulation.antithetic = m.flag("antithetic", c.simulation.antithetic);
        c.simulation.sample_paths = m.count("sample_paths", c.simulation.sample_paths);
        c.simulation.sample_stride = m.count("sample_stride", c.simulation.sample_stride);
        m.done();
        if (c.simulation.paths < 100) throw ConfigError("simulation.paths must be at least 100");
        if (c.simulation.sample_stride < 1) throw ConfigError("simulation.sample_stride must be positive");
    }
    if (s.has("verification")) parse_verification(s.sub("verification"), c.verification, control_dim);
    check_verify_config(c.verification, c.horizon);
    if (s.has("bsde")) {
        Section b = s.sub("bsde");
        c.bsde.paths = b.count("paths", c.bsde.paths);
        c.bsde.degree = static_cast<int>(b.count("degree", static_cast<std::uint64_t>(c.bsde.degree)));
        c.bsde.antithetic = b.flag("antithetic", c.bsde.antithetic);
        b.done();
        if (c.bsde.degree < 0 || c.bsde.degree > 6) throw ConfigError("bsde.degree must be between 0 and 6");
    }
    if (s.has("lambda")) {
        Section lam = s.sub("lambda");
        if (const json* v = lam.find("ladder_steps")) {
            if (!v->is_array()) throw ConfigError("lambda.ladder_steps must be a list of integers");
            c.lambda.ladder_steps.clear();
            for (const auto& k : *v) {
                if (!k.is_number_integer() || k.get<long long>() < 1) {
                    throw ConfigError("lambda.ladder_steps must be positive integers");
                }
                c.lambda.ladder_steps.push_back(k.get<std::size_t>());
            }
        }
        c.lambda.paths = lam.count("paths", c.lambda.paths);
        c.lambda.t = lam.number("t", c.lambda.t);
        lam.done();
    }
    s.done();
    c.verification.seed = c.simulation.seed;
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string ext = path.extension().string();
    ConfigFormat format;
    if (ext == ".toml") {
        format = ConfigFormat::toml;
    } else if (ext == ".json") {
        format = ConfigFormat::json;
    } else {
        throw ConfigError("config must have a .toml or .json extension");
    }
    return parse_config(buf.str(), format);
}

void set_grid_steps(RunConfig& config, std::size_t steps) {
    if (steps < 1) throw ConfigError("grid steps must be positive");
    config.steps = steps;
    if (config.problem) {
        config.problem->grid = TimeGrid::uniform(config.horizon, steps);
        config.problem = finalize(std::move(*config.problem));
    }
    if (config.market) {
        config.market->grid = TimeGrid::uniform(config.horizon, steps);
        config.market = finalize(std::move(*config.market));
    }
}

void set_seed(RunConfig& config, std::uint64_t seed) {
    config.simulation.seed = seed;
    config.verification.seed = seed;
}

}  // namespace tilq
