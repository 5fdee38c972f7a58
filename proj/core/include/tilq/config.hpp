#pragma once

#include "tilq/model.hpp"
#include "tilq/riccati.hpp"
#include "tilq/verification.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tilq {

inline constexpr int kSchemaVersion = 1;

enum class RunKind { lq, mv };
enum class ConfigFormat { toml, json };

struct SimulationSettings {
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    bool antithetic = true;
    std::size_t sample_paths = 20;  // rows written to paths_sample.csv
    std::size_t sample_stride = 1;  // node decimation for paths_sample.csv
};

struct BsdeSettings {
    std::size_t paths = 10000;
    int degree = 3;
    bool antithetic = false;
};

struct LambdaSettings {
    std::vector<std::size_t> ladder_steps = {1, 2, 4, 8, 16};
    std::size_t paths = 20000;
    double t = 0.0;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    RunKind kind = RunKind::lq;
    double horizon = 1.0;
    std::size_t steps = 100;
    std::optional<ProblemSpec> problem;  // kind == lq
    std::optional<MarketSpec> market;    // kind == mv
    TruncationConfig truncation;
    SimulationSettings simulation;
    VerifyConfig verification;
    BsdeSettings bsde;
    LambdaSettings lambda;
};

/// Parses TOML or JSON text into a finalized RunConfig. Unknown keys, a
/// missing or unsupported schema_version and malformed coefficients throw
/// ConfigError.
RunConfig parse_config(std::string_view text, ConfigFormat format);

/// Format from the extension (.toml / .json).
RunConfig load_config(const std::filesystem::path& path);

/// Rebuilds the grid with `steps` uniform steps (plus coefficient breakpoints).
void set_grid_steps(RunConfig& config, std::size_t steps);

/// Reseeds simulation and verification.
void set_seed(RunConfig& config, std::uint64_t seed);

std::string to_string(RunKind kind);

}  // namespace tilq
