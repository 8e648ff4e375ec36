// Configuration, orchestration, artifacts and the acceptance runner.

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "indexlab/acceptance.hpp"
#include "indexlab/config.hpp"
#include "indexlab/harness.hpp"

using namespace indexlab;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> column(const std::string& csv_text, std::size_t index) {
  std::vector<std::string> out;
  std::istringstream in(csv_text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    for (std::size_t i = 0; i <= index; ++i) std::getline(row, cell, ',');
    out.push_back(cell);
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("indexlab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

const char* small_sweep = R"({
  "experiment": "sweep-lambda",
  "model": { "preset": "scalar-full-kink" },
  "disc": { "T": 40, "n": 256 },
  "m": 1,
  "lambda_values": [4, 0.5, 1, 2]
})";

} // namespace

// ---- config parsing -------------------------------------------------------

TEST(Config, DefaultsAndPresets) {
  const auto c = parse_config(R"({"experiment": "verify-main"})");
  EXPECT_EQ(c.experiment, ExperimentKind::verify_main);
  EXPECT_EQ(c.m, 1);
  EXPECT_EQ(c.disc.T, 40.0);
  EXPECT_EQ(c.disc.n, 4096);
  EXPECT_EQ(c.model.profile.h_minus(), 0.0);
  const auto full = parse_config(R"({"experiment": "sweep-lambda", "model": {"preset": "scalar-full-kink"}})");
  EXPECT_EQ(full.model.profile.h_minus(), -1.0);
}

TEST(Config, UnknownFieldsAreRejectedWithPath) {
  const std::string msg = config_error(R"({"experiment": "verify-main", "disc": {"T": 40, "safety_factr": 4}})");
  EXPECT_NE(msg.find("disc"), std::string::npos) << msg;
  EXPECT_NE(msg.find("safety_factr"), std::string::npos) << msg;
  EXPECT_NE(config_error(R"({"experiment": "verify-main", "lamda_values": [1]})").find("lamda_values"), std::string::npos);
  EXPECT_NE(config_error(R"({"experiment": "verify-main", "model": {"d2": {"type": "scalar", "valeu": 1}}})").find("valeu"),
            std::string::npos);
}

TEST(Config, SyntaxErrorsCarryLineAndColumn) {
  const std::string msg = config_error("{\n  \"experiment\": \"verify-main\",\n  \"m\": ,\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Config, SemanticViolations) {
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "lambda_values": []})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "lambda_values": [1, -2]})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "m": 0})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "m": 1.5})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "m": "2"})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "plot"})").empty());
  EXPECT_FALSE(config_error(R"({"m": 1})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "disc": {"n": 8}})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "disc": {"bc": "periodic"}})").empty());
  EXPECT_NE(config_error(R"({"experiment": "verify-main", "disc": {"T": 20}})").find("disc"), std::string::npos);
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "model": {"inner_dim": 4, "d2": {"type": "diagonal-linear", "k_max": 1}}})").empty());
  EXPECT_FALSE(config_error(R"({"experiment": "verify-main", "model": {"d2": {"type": "conjugation-difference"}}})").empty());
}

TEST(Config, EveryModelFieldRoundTrips) {
  const char* text = R"({
    "experiment": "identities",
    "seed": 17,
    "model": {
      "inner_dim": 3,
      "d2": { "type": "explicit", "matrix": [[1, [0, 1], 0], [[0, -1], 2, 0], [0, 0, -1]] },
      "a": { "type": "banded", "bandwidth": 1, "value": 0.25, "diagonal": 0.5 },
      "profile": { "kind": "smoothed-step", "h_minus": -0.5, "h_plus": 1.5, "cutoff": 6 },
      "epsilon": 0.5
    },
    "disc": { "T": 60, "n": 128, "bc": "dirichlet", "safety_factor": 3 },
    "m": 2,
    "lambda_values": [0.5, 2],
    "epsilon_values": [0.5],
    "output_dir": "somewhere",
    "workers": 2,
    "record_timing": true,
    "quadrature": { "abs_tol": 1e-11, "rel_tol": 0, "order": 15, "max_depth": 30 }
  })";
  const auto c = parse_config(text);
  EXPECT_EQ(c.model.inner_dim, 3);
  EXPECT_EQ(c.model.epsilon, 0.5);
  EXPECT_EQ(c.model.profile.kind(), ProfileKind::smoothed_step);
  EXPECT_EQ(c.disc.safety_factor, 3.0);
  const Json canonical = to_json(c);
  const auto again = parse_config(canonical.dump());
  EXPECT_EQ(to_json(again).dump(), canonical.dump());
  EXPECT_EQ(config_digest(again), config_digest(c));
  EXPECT_EQ(build_inner_pair(again.model).d2.matrix(), build_inner_pair(c.model).d2.matrix());

  for (const char* generator : {R"({"type": "random-hermitian", "seed": 3, "scale": 2})", R"({"type": "harmonic"})",
                                R"({"type": "diagonal-linear", "k_max": 1})", R"({"type": "scalar", "value": 0.5})"}) {
    const std::string t = std::string(R"({"experiment": "identities", "model": {"inner_dim": 3, "a": )") + generator + "}}";
    const auto g = parse_config(t);
    EXPECT_EQ(config_digest(parse_config(to_json(g).dump())), config_digest(g)) << generator;
  }
}

TEST(Config, DigestTracksContent) {
  const auto a = parse_config(small_sweep);
  auto b = a;
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.lambda_values.back() = 2.5;
  EXPECT_NE(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 16u);
}

// ---- orchestration --------------------------------------------------------

TEST(Harness, CsvIsDeterministicAndSorted) {
  auto c = parse_config(small_sweep);
  const std::string first = harness_detail::csv(execute(c, 1).records);
  const std::string second = harness_detail::csv(execute(c, 1).records);
  const std::string threaded = harness_detail::csv(execute(c, 3).records);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, threaded);
  EXPECT_EQ(first.substr(0, first.find('\n')), "experiment,m,lambda,epsilon,n,T,value,error_estimate,wall_time_s");
  const auto lambdas = column(first, 2);
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (column(first, 0)[i] == column(first, 0)[i - 1]) EXPECT_LE(std::stod(lambdas[i - 1]), std::stod(lambdas[i]));
}

TEST(Harness, ZeroCouplingGivesZeroColumn) {
  auto c = parse_config(R"({
    "experiment": "sweep-lambda",
    "model": { "preset": "scalar-half-kink", "a": { "type": "scalar", "value": 0 } },
    "disc": { "T": 40, "n": 128 },
    "lambda_values": [0.5, 1, 2]
  })");
  const auto result = execute(c);
  ASSERT_FALSE(result.records.empty());
  for (const auto& r : result.records) EXPECT_EQ(r.value, 0.0) << r.experiment;
  for (const auto& v : column(harness_detail::csv(result.records), 6)) EXPECT_EQ(std::stod(v), 0.0);
}

TEST(Harness, ConvergeOnZeroCouplingIsExact) {
  auto c = parse_config(R"({
    "experiment": "converge",
    "model": { "preset": "scalar-full-kink", "a": { "type": "scalar", "value": 0 } },
    "disc": { "T": 40, "n": 127, "safety_factor": 2 },
    "lambda_values": [1],
    "n_ladder": [64, 128, 256],
    "T_ladder": [20, 40]
  })");
  const auto result = execute(c);
  EXPECT_TRUE(result.passed());
  bool exact = false;
  for (const auto& v : result.verdicts) exact = exact || v.line.find("exact") != std::string::npos;
  EXPECT_TRUE(exact);
}

TEST(Harness, VerifyMainSummaryLine) {
  auto c = parse_config(R"({
    "experiment": "verify-main",
    "model": { "preset": "scalar-half-kink" },
    "disc": { "T": 40, "n": 2048 },
    "lambda_values": [1]
  })");
  const auto result = execute(c);
  ASSERT_FALSE(result.verdicts.empty());
  const std::string& line = result.verdicts.front().line;
  EXPECT_EQ(line.rfind("max|LHS\xe2\x88\x92RHS| = ", 0), 0u) << line;
  EXPECT_NE(line.find("\xe2\x89\xa4 1e-3: PASS"), std::string::npos) << line;
  EXPECT_TRUE(result.passed());
}

TEST(Harness, SpectralFlowDemo) {
  auto c = parse_config(R"({
    "experiment": "sf-demo",
    "model": {
      "inner_dim": 6,
      "d2": { "type": "random-hermitian", "seed": 3, "scale": 2 },
      "a": { "type": "conjugation-difference", "seed": 4 },
      "profile": { "kind": "tanh-clamped", "h_minus": 0, "h_plus": 1 }
    },
    "lambda_values": [0.5, 5]
  })");
  const auto result = execute(c);
  EXPECT_TRUE(result.passed());
}

TEST(Harness, RunWritesArtifacts) {
  auto c = parse_config(small_sweep);
  const fs::path dir = scratch("artifacts");
  std::ostringstream err;
  RunOptions opt;
  opt.output_dir = dir.string();
  ASSERT_EQ(run(c, opt, err), 0) << err.str();
  for (const char* name : {"results.csv", "manifest.json", "summary.txt"}) EXPECT_TRUE(fs::exists(dir / name)) << name;
  const Json manifest = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["digest"], config_digest(c));
  EXPECT_EQ(manifest["config"], to_json(c));
  EXPECT_TRUE(manifest.contains("versions"));
  EXPECT_TRUE(manifest.contains("wall_times_s"));
  const std::string csv_first = slurp(dir / "results.csv");
  ASSERT_EQ(run(c, opt, err), 0);
  EXPECT_EQ(slurp(dir / "results.csv"), csv_first);
  fs::remove_all(dir);
}

TEST(Harness, RunExitCodes) {
  auto c = parse_config(small_sweep);
  std::ostringstream err;
  RunOptions opt;
  const fs::path blocker = scratch("blocker");
  { std::ofstream(blocker.string()) << "file"; }
  opt.output_dir = (blocker / "inside").string();
  EXPECT_EQ(run(c, opt, err), 2);

  auto bad = c;
  bad.lambda_values = {-1.0};
  opt.output_dir = scratch("bad").string();
  EXPECT_EQ(run(bad, opt, err), 1);
  fs::remove_all(blocker);
  fs::remove_all(*opt.output_dir);
}

// ---- acceptance runner ----------------------------------------------------

TEST(Acceptance, MutatedConstantFailsA1) {
  acceptance::Options opt;
  EXPECT_TRUE(acceptance::run_criterion("A1", opt).pass());
  opt.c_three_halves_override = 0.6;
  const auto r = acceptance::run_criterion("A1", opt);
  EXPECT_FALSE(r.pass());
  EXPECT_NE(acceptance::format_line(r).find("FAIL"), std::string::npos);
}

TEST(Acceptance, SelectionErrors) {
  std::ostringstream out;
  acceptance::Options opt;
  opt.criteria = std::vector<std::string>{};
  EXPECT_EQ(acceptance::run(opt, out), 2);
  opt.criteria = std::vector<std::string>{"A99"};
  EXPECT_EQ(acceptance::run(opt, out), 2);
  opt.criteria = std::vector<std::string>{"A1", "A2"};
  EXPECT_EQ(acceptance::run(opt, out), 0);
  EXPECT_NE(out.str().find("A2   PASS"), std::string::npos) << out.str();
}

TEST(Acceptance, OptionsParsing) {
  const auto opt = acceptance::parse_options(R"({"criteria": ["A1"], "inject": {"c_three_halves": 0.6}})");
  ASSERT_TRUE(opt.criteria.has_value());
  EXPECT_EQ(opt.criteria->size(), 1u);
  EXPECT_EQ(opt.c_three_halves_override.value(), 0.6);
  EXPECT_FALSE(acceptance::parse_options("{}").criteria.has_value());
  EXPECT_THROW(acceptance::parse_options(R"({"criterion": []})"), ConfigError);
  EXPECT_THROW(acceptance::parse_options(R"({"inject": {"c": 1}})"), ConfigError);
}
