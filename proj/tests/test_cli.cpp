#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtem/cli.hpp"

namespace fs = std::filesystem;
using mtem::Json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mtem::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// The run directory printed on the last "run <dir>" line.
fs::path run_dir(const Result& r) {
  const auto pos = r.out.rfind("run ");
  EXPECT_NE(pos, std::string::npos);
  std::string dir = r.out.substr(pos + 4);
  while (!dir.empty() && dir.back() == '\n') dir.pop_back();
  return dir;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("mtem_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string out_dir(const std::string& sub = "runs") const { return (root_ / sub).string(); }
  fs::path write_config(const std::string& name, const std::string& body) const {
    const auto p = root_ / name;
    std::ofstream(p) << body;
    return p;
  }
  fs::path root_;
};

const std::vector<std::string> kSmallSweep = {"--m-list", "8,16,32", "--m-ref", "64", "--paths", "20",
                                              "--horizon", "1", "--q", "3,4"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST_F(CliTest, MissingSubcommandIsAUsageError) { EXPECT_EQ(run({}).code, mtem::cli::kUsage); }

TEST_F(CliTest, UnknownProblemIsAUsageError) {
  const auto r = run({"check", "--problem", "example9", "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kUsage);
  EXPECT_NE(r.err.find("example9"), std::string::npos);
}

TEST_F(CliTest, UnknownPolicyIsAUsageError) {
  EXPECT_EQ(run({"simulate", "--policy", "magic", "--output-dir", out_dir()}).code, mtem::cli::kUsage);
}

TEST_F(CliTest, CheckWritesOneReportPerCondition) {
  const auto r = run({"check", "--problem", "example2", "--radius", "2", "--samples", "500", "--seed", "7",
                      "--output-dir", out_dir()});
  ASSERT_TRUE(r.code == mtem::cli::kOk || r.code == mtem::cli::kViolation) << r.err;
  const auto dir = run_dir(r);
  const Json summary = Json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["passed"].get<bool>(), r.code == mtem::cli::kOk);
  std::set<std::string> names;
  for (const auto& p : summary["probes"]) names.insert(p["condition"].get<std::string>());
  for (const char* n : {"local_lipschitz", "contractivity", "khasminskii", "diffusion_growth", "initial_modulus",
                        "truncated_lipschitz", "truncated_khasminskii"})
    EXPECT_TRUE(names.count(n)) << n;
  EXPECT_TRUE(fs::exists(dir / "probes.csv"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
}

TEST_F(CliTest, CheckRejectsStepsAboveDeltaStar) {
  const auto r = run({"check", "--problem", "example2", "--deltas", "0.1", "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kValidation);
  EXPECT_NE(r.err.find("check.deltas[0]"), std::string::npos);
}

TEST_F(CliTest, CheckExample2AtOneHalfFlagsAdmissibility) {
  const auto r = run({"check", "--problem", "example2", "--epsilon", "0.5", "--q", "4", "--samples", "200",
                      "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kViolation);
  EXPECT_NE(r.out.find("FAIL admissibility"), std::string::npos);
}

TEST_F(CliTest, EmDivergenceNamesTheStep) {
  const auto r = run({"simulate", "--problem", "example2", "--scheme", "em", "--m", "2", "--x0", "3", "--horizon", "5",
                      "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kDivergence);
  EXPECT_NE(r.err.find("step"), std::string::npos);
}

TEST_F(CliTest, MtemOutsideThePolicyDomainIsAValidationError) {
  const auto r = run({"simulate", "--problem", "example2", "--scheme", "mtem", "--m", "2", "--x0", "3",
                      "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kValidation);
  EXPECT_NE(r.err.find("simulate.m"), std::string::npos);
}

TEST_F(CliTest, MtemAtCoarseAdmissibleStepGivesAFiniteTrace) {
  const auto r = run({"simulate", "--problem", "example2", "--scheme", "mtem", "--m", "8", "--x0", "3",
                      "--output-dir", out_dir()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("truncation_activations"), std::string::npos);
  const auto trace = slurp(run_dir(r) / "trace.csv");
  EXPECT_EQ(trace.find("nan"), std::string::npos);
  EXPECT_EQ(trace.find("inf"), std::string::npos);
}

TEST_F(CliTest, SameSeedGivesIdenticalTraces) {
  const std::vector<std::string> base = {"simulate", "--problem", "example1", "--m", "32", "--seed", "5"};
  const auto a = run(concat(base, {"--output-dir", out_dir("a")}));
  const auto b = run(concat(base, {"--output-dir", out_dir("b")}));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(run_dir(a) / "trace.csv"), slurp(run_dir(b) / "trace.csv"));
  EXPECT_EQ(run_dir(a).filename(), run_dir(b).filename());
}

TEST_F(CliTest, ConvergeIsIndependentOfWorkerCount) {
  const auto a = run(concat(concat({"converge", "--workers", "1", "--output-dir", out_dir("a")}, kSmallSweep), {}));
  const auto b = run(concat({"converge", "--workers", "3", "--output-dir", out_dir("b")}, kSmallSweep));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"errors.csv", "summary.json", "config.json"})
    EXPECT_EQ(slurp(run_dir(a) / f), slurp(run_dir(b) / f)) << f;
  const Json s = Json::parse(slurp(run_dir(a) / "summary.json"));
  EXPECT_TRUE(s.contains("run_id"));
  EXPECT_TRUE(s.contains("fitted_orders"));
  EXPECT_EQ(s["divergent_paths_total"].get<int>(), 0);
  EXPECT_EQ(s["run_id"].get<std::string>(), run_dir(a).filename().string());
}

TEST_F(CliTest, ConvergeRejectsNonDivisorBeforeSimulating) {
  const auto r = run({"converge", "--m-list", "8,24", "--m-ref", "64", "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kValidation);
  EXPECT_NE(r.err.find("sweep.coarse_m_list[1]"), std::string::npos);
  EXPECT_FALSE(fs::exists(out_dir()));
}

TEST_F(CliTest, ConvergeRejectsZeroPaths) {
  const auto r = run({"converge", "--paths", "0", "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kValidation);
  EXPECT_NE(r.err.find("sweep.paths"), std::string::npos);
}

TEST_F(CliTest, MomentsRejectsExponentAboveTheRunningSupLimit) {
  const auto r = run({"moments", "--pbar", "6", "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kValidation);
  EXPECT_NE(r.err.find("p + 2 - r"), std::string::npos);
}

TEST_F(CliTest, MomentsReportsTheRatio) {
  const auto r = run(concat({"moments", "--pbar", "5", "--output-dir", out_dir()}, kSmallSweep));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ratio_across_steps"), std::string::npos);
  const Json s = Json::parse(slurp(run_dir(r) / "summary.json"));
  EXPECT_TRUE(std::isfinite(s["ratio_across_steps"].get<double>()));
}

TEST_F(CliTest, ConfigFileWithFlagOverrides) {
  const auto cfg = write_config("c.json", R"({
    "problem": "example2", "seed": 9,
    "sweep": {"coarse_m_list": [8, 16, 32], "m_ref": 64, "paths": 10, "horizon": 1, "q_list": [3]}
  })");
  const auto r = run({"converge", "--config", cfg.string(), "--seed", "10", "--output-dir", out_dir()});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json echo = Json::parse(slurp(run_dir(r) / "config.json"));
  EXPECT_EQ(echo["seed"].get<int>(), 10);
  EXPECT_EQ(echo["sweep"]["paths"].get<int>(), 10);
  EXPECT_EQ(echo["policy"].get<std::string>(), "ex2-closed-form");
}

TEST_F(CliTest, EchoRoundTripsToTheSameRun) {
  const auto a = run(concat({"converge", "--output-dir", out_dir("a")}, kSmallSweep));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto echo_path = run_dir(a) / "config.json";
  const auto b = run({"converge", "--config", echo_path.string(), "--output-dir", out_dir("b")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(run_dir(a).filename(), run_dir(b).filename());
  EXPECT_EQ(slurp(run_dir(a) / "errors.csv"), slurp(run_dir(b) / "errors.csv"));
}

TEST_F(CliTest, ConfigErrorsCarryFieldPaths) {
  const auto cfg = write_config("bad.json", R"({"seed": -1, "sweep": {"paths": "many", "bogus": 1}, "extra": true})");
  const auto r = run({"converge", "--config", cfg.string(), "--output-dir", out_dir()});
  EXPECT_EQ(r.code, mtem::cli::kValidation);
  for (const char* field : {"seed:", "sweep.paths:", "sweep.bogus:", "extra:"})
    EXPECT_NE(r.err.find(field), std::string::npos) << field;
}

TEST_F(CliTest, UnreadableConfigIsAValidationError) {
  EXPECT_EQ(run({"check", "--config", (root_ / "missing.json").string()}).code, mtem::cli::kValidation);
  const auto cfg = write_config("broken.json", "{ not json");
  EXPECT_EQ(run({"check", "--config", cfg.string()}).code, mtem::cli::kValidation);
}
