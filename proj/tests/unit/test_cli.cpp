#include "fixtures.hpp"

#include "app.hpp"
#include "manifest.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace tilq::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "tilq");
    std::ostringstream out, err;
    Result r;
    r.code = tilq::app::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(::testing::TempDir()) / ("tilq_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string config(const char* name) { return (source_dir() / "configs" / name).string(); }

fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = fs::path(::testing::TempDir()) / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(Sha256, KnownDigest) {
    EXPECT_EQ(tilq::app::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(tilq::app::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(cli({}).code, tilq::app::kUsage);
    EXPECT_EQ(cli({"frobnicate"}).code, tilq::app::kUsage);
    EXPECT_EQ(cli({"solve-lq"}).code, tilq::app::kUsage);
    EXPECT_EQ(cli({"--help"}).code, tilq::app::kOk);
}

TEST(Cli, SolveLqWritesTablesAndManifest) {
    const fs::path out = scratch("lq");
    const Result r = cli({"solve-lq", "--config", config("lq_case2.toml"), "--out", out.string(), "--paths", "200"});
    ASSERT_EQ(r.code, tilq::app::kOk) << r.err;
    for (const char* f : {"riccati.csv", "policy.csv", "paths_sample.csv", "solve_report.json", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    EXPECT_EQ(slurp(out / "riccati.csv").substr(0, 19), "t,M,N,J,Gamma1,Phi\n");
    const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(m["subcommand"], "solve-lq");
    EXPECT_EQ(m["exit_code"], 0);
    EXPECT_EQ(m["config_sha256"], tilq::app::sha256_file(config("lq_case2.toml")));
    for (const auto& f : m["outputs"]) {
        EXPECT_EQ(f["sha256"], tilq::app::sha256_file(out / f["file"].get<std::string>()));
    }
}

TEST(Cli, JsonFormat) {
    const fs::path out = scratch("lq_json");
    const Result r = cli({"solve-lq", "--config", config("lq_case2.json"), "--out", out.string(), "--format", "json",
                          "--paths", "200"});
    ASSERT_EQ(r.code, tilq::app::kOk) << r.err;
    const auto t = nlohmann::json::parse(slurp(out / "riccati.json"));
    EXPECT_EQ(t["columns"][1], "M");
    EXPECT_EQ(t["rows"].size(), 201u);
}

TEST(Cli, ZeroMeanWeightGivesZeroFeedback) {
    const fs::path cfg = write_config("mv_mu1_zero.toml", R"(
schema_version = 1
kind = "mv"
[grid]
horizon = 1.0
steps = 50
[market]
r = 0.03
theta = 0.4
mu1 = 0.0
mu2 = 0.5
)");
    const fs::path out = scratch("mv0");
    const Result r = cli({"solve-mv", "--config", cfg.string(), "--out", out.string(), "--paths", "200"});
    ASSERT_EQ(r.code, tilq::app::kOk) << r.err;
    std::istringstream csv(slurp(out / "mv_policy.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "t,alpha_1,beta_1");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        EXPECT_EQ(line.substr(a + 1, b - a - 1), "0") << line;
        ++rows;
    }
    EXPECT_EQ(rows, 51u);
}

TEST(Cli, ConfigErrorExitCode) {
    const fs::path cfg = write_config("bad_key.toml", "schema_version = 1\nkind = \"lq\"\nwhat = 3\n");
    const Result r = cli({"solve-lq", "--config", cfg.string(), "--out", scratch("bad").string()});
    EXPECT_EQ(r.code, tilq::app::kConfig);
    EXPECT_NE(r.err.find("error[config]"), std::string::npos);
}

TEST(Cli, AssumptionViolationExitCode) {
    const fs::path cfg = write_config("g_below_h.toml", R"(
schema_version = 1
kind = "lq"
[grid]
horizon = 1.0
steps = 20
[problem]
B = 0.2
D = 1.0
R = 1.0
G = 0.5
h = 1.0
)");
    const Result r = cli({"solve-lq", "--config", cfg.string(), "--out", scratch("viol").string()});
    EXPECT_EQ(r.code, tilq::app::kAssumption);
    EXPECT_NE(r.err.find("G >= h > 0"), std::string::npos);
}

TEST(Cli, SolveBsdeNeedsMeanVarianceConfig) {
    const Result r = cli({"solve-bsde", "--config", config("lq_case2.toml"), "--out", scratch("bsde_lq").string()});
    EXPECT_EQ(r.code, tilq::app::kConfig);
}

TEST(Cli, RunsAreByteReproducible) {
    const fs::path a = scratch("rep_a"), b = scratch("rep_b");
    for (const fs::path& dir : {a, b}) {
        ASSERT_EQ(cli({"solve-bsde", "--config", config("mv_ou.toml"), "--out", dir.string(), "--paths", "2000",
                       "--grid", "20"})
                      .code,
                  tilq::app::kOk);
    }
    EXPECT_EQ(slurp(a / "bsde_solution.csv"), slurp(b / "bsde_solution.csv"));
    EXPECT_FALSE(slurp(a / "bsde_solution.csv").empty());
}

TEST(Cli, ReportChecksManifests) {
    const fs::path run = scratch("rep_src");
    ASSERT_EQ(cli({"solve-mv", "--config", config("mv_det.toml"), "--out", run.string(), "--paths", "200"}).code,
              tilq::app::kOk);
    const fs::path rep = scratch("rep_out");
    Result r = cli({"report", run.string(), "--out", rep.string()});
    ASSERT_EQ(r.code, tilq::app::kOk) << r.err;
    auto j = nlohmann::json::parse(slurp(rep / "report.json"));
    EXPECT_TRUE(j["all_checksums_ok"].get<bool>());
    EXPECT_EQ(j["runs"][0]["subcommand"], "solve-mv");

    std::ofstream(run / "mv_policy.csv", std::ios::app) << "tampered\n";
    const fs::path rep2 = scratch("rep_out2");
    r = cli({"report", (run / "manifest.json").string(), "--out", rep2.string()});
    EXPECT_EQ(r.code, tilq::app::kConfig);
    j = nlohmann::json::parse(slurp(rep2 / "report.json"));
    EXPECT_FALSE(j["all_checksums_ok"].get<bool>());
}
