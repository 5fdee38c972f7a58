#include "tilq/io.hpp"

#include "tilq/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace tilq {

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("Table::add: row width does not match the header");
    rows.push_back(std::move(row));
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string cell_text(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }

}  // namespace

std::string render_csv(const Table& table) {
    std::string out;
    for (std::size_t k = 0; k < table.columns.size(); ++k) {
        if (k) out += ',';
        out += table.columns[k];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out += ',';
            out += cell_text(row[k]);
        }
        out += '\n';
    }
    return out;
}

std::string render_json(const Table& table) {
    nlohmann::ordered_json j;
    j["columns"] = table.columns;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json r = nlohmann::ordered_json::array();
        for (const auto& c : row) {
            if (const auto* d = std::get_if<double>(&c)) {
                if (std::isfinite(*d)) {
                    r.push_back(*d);
                } else {
                    r.push_back(format_double(*d));
                }
            } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
                r.push_back(*i);
            } else {
                r.push_back(std::get<std::string>(c));
            }
        }
        j["rows"].push_back(std::move(r));
    }
    return j.dump(1) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::config, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCategory::config, "write failed for " + path.string());
}

std::filesystem::path write_table(const Table& table, const std::filesystem::path& dir, const std::string& stem,
                                  OutputFormat format) {
    const auto path = dir / (stem + (format == OutputFormat::csv ? ".csv" : ".json"));
    write_text(path, format == OutputFormat::csv ? render_csv(table) : render_json(table));
    return path;
}

Table riccati_table(const RiccatiSolution& sol) {
    Table t;
    t.columns = {"t", "M", "N", "J", "Gamma1", "Phi"};
    for (std::size_t i = 0; i < sol.grid.size(); ++i) {
        t.add({sol.grid[i], sol.M[i], sol.N[i], sol.J[i], sol.Gamma1[i], sol.Phi[i]});
    }
    return t;
}

namespace {

void add_vector_columns(Table& t, const std::string& name, Eigen::Index n) {
    for (Eigen::Index k = 0; k < n; ++k) t.columns.push_back(name + "_" + std::to_string(k + 1));
}

void append(std::vector<Cell>& row, const Eigen::VectorXd& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) row.emplace_back(v[k]);
}

}  // namespace

Table policy_table(const EquilibriumPolicy& policy) {
    Table t;
    const Eigen::Index l = policy.alpha.empty() ? 0 : policy.alpha.front().size();
    t.columns = {"t"};
    add_vector_columns(t, "alpha", l);
    add_vector_columns(t, "beta", l);
    for (std::size_t i = 0; i < policy.grid.size(); ++i) {
        std::vector<Cell> row{policy.grid[i]};
        append(row, policy.alpha[i]);
        append(row, policy.beta[i]);
        t.add(std::move(row));
    }
    return t;
}

Table mv_policy_table(const MVPolicy& policy, const MVAnsatzSolution& sol) {
    Table t;
    const int d = policy.noise_dim();
    const TimeGrid& grid = policy.grid();
    if (policy.deterministic()) {
        t.columns = {"t"};
        add_vector_columns(t, "alpha", d);
        add_vector_columns(t, "beta", d);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            std::vector<Cell> row{grid[i]};
            append(row, policy.alpha(i));
            append(row, policy.beta(i));
            t.add(std::move(row));
        }
        return t;
    }
    t.columns = {"t", "y"};
    add_vector_columns(t, "alpha", d);
    add_vector_columns(t, "beta", d);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const PolyBasis& basis = sol.mu_regression->steps[i].basis;
        for (int k = -2; k <= 2; ++k) {
            const double y = basis.center + k * basis.scale;
            std::vector<Cell> row{grid[i], y};
            append(row, policy.alpha(i, y));
            append(row, policy.beta(i, y));
            t.add(std::move(row));
        }
    }
    return t;
}

Table bsde_table(const MVAnsatzSolution& sol) {
    if (sol.deterministic || !sol.mu_regression || !sol.gamma2_regression) {
        throw std::logic_error("bsde_table: solution has no regression tables");
    }
    Table t;
    const int d = sol.mu_regression->noise_dim;
    t.columns = {"step", "t", "equation", "basis_index", "center", "scale", "value_coef"};
    add_vector_columns(t, "z_coef", d);
    const std::pair<const char*, const RegressionBSDESolution*> eqs[] = {{"M", sol.mu_regression.get()},
                                                                         {"Gamma2", sol.gamma2_regression.get()}};
    for (const auto& [name, reg] : eqs) {
        for (std::size_t i = 0; i < reg->steps.size(); ++i) {
            const StepFit& f = reg->steps[i];
            for (int k = 0; k < f.basis.size(); ++k) {
                std::vector<Cell> row{as_int(i), sol.grid[i], std::string(name), static_cast<std::int64_t>(k),
                                      f.basis.center, f.basis.scale, f.value_coef[k]};
                append(row, f.z_coef.row(k).transpose());
                t.add(std::move(row));
            }
        }
    }
    return t;
}

Table paths_table(const PathBundle& bundle, std::size_t rows, std::size_t stride) {
    Table t;
    const bool factor = bundle.Y.size() > 0;
    t.columns = {"path", "t", "X"};
    if (factor) t.columns.emplace_back("Y");
    const std::size_t n = std::min(rows, bundle.paths());
    const auto nodes = static_cast<std::size_t>(bundle.X.cols());
    stride = std::max<std::size_t>(stride, 1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t k = 0; k < nodes; ++k) {
            if (k % stride != 0 && k + 1 != nodes) continue;
            const auto pi = static_cast<Eigen::Index>(p);
            const auto ki = static_cast<Eigen::Index>(k);
            std::vector<Cell> row{as_int(p), bundle.grid[bundle.start_index + k], bundle.X(pi, ki)};
            if (factor) row.emplace_back(bundle.Y(pi, ki));
            t.add(std::move(row));
        }
    }
    return t;
}

Table verification_table(const VerificationReport& report) {
    Table t;
    t.columns = {"t", "v_index", "epsilon", "ratio", "ci", "predicted_first_order", "predicted_second_order",
                 "verdict"};
    for (const ProbeResult& p : report.probes) {
        const std::string verdict = to_string(p.verdict);
        for (std::size_t e = 0; e < p.epsilons.size(); ++e) {
            t.add({p.t, as_int(p.direction), p.epsilons[e], p.ratio[e], p.ratio_ci[e], p.predicted_first,
                   p.predicted_second, verdict});
        }
        t.add({p.t, as_int(p.direction), 0.0, p.extrapolated, p.extrapolated_ci, p.predicted_first, p.predicted_second,
               verdict});
    }
    return t;
}

}  // namespace tilq
