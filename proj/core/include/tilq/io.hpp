#pragma once

#include "tilq/meanvar.hpp"
#include "tilq/riccati.hpp"
#include "tilq/simulate.hpp"
#include "tilq/verification.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace tilq {

enum class OutputFormat { csv, json };

using Cell = std::variant<double, std::int64_t, std::string>;

/// Column-named rows; written as CSV or as {"columns": [...], "rows": [[...]]}.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
};

/// %.17g: equal values always print the same bytes.
std::string format_double(double v);

std::string render_csv(const Table& table);
std::string render_json(const Table& table);

/// Writes `stem` + ".csv" or ".json" under `dir` and returns the path.
std::filesystem::path write_table(const Table& table, const std::filesystem::path& dir, const std::string& stem,
                                  OutputFormat format);

void write_text(const std::filesystem::path& path, const std::string& text);

/// t, M, N, J, Gamma1, Phi
Table riccati_table(const RiccatiSolution& sol);
/// t, alpha_1..alpha_l, beta_1..beta_l
Table policy_table(const EquilibriumPolicy& policy);
/// Deterministic mode: t, alpha_k, beta_k. Factor mode: t, y, alpha_k, beta_k
/// on five factor values per node (basis center + {-2,-1,0,1,2} scale).
Table mv_policy_table(const MVPolicy& policy, const MVAnsatzSolution& sol);
/// Regression coefficients: step, t, equation, basis_index, center, scale,
/// value_coef, z_coef_1..z_coef_d.
Table bsde_table(const MVAnsatzSolution& sol);
/// path, t, X (and Y when factor driven) for the first `rows` paths every
/// `stride` nodes (the last node is always kept).
Table paths_table(const PathBundle& bundle, std::size_t rows, std::size_t stride);
/// t, v_index, epsilon, ratio, ci, predicted_first_order,
/// predicted_second_order, verdict. The extrapolated row has epsilon 0.
Table verification_table(const VerificationReport& report);

}  // namespace tilq
