#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "logz/config.hpp"
#include "logz/hardness.hpp"

using namespace logz;

TEST_SUITE_BEGIN("cli");

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(LOGZ_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

int run_cli_capture(const std::string& args, const std::string& out_file) {
  std::string cmd = std::string(LOGZ_CLI_PATH) + " " + args + " >" + out_file + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

const char* kSmallConfig = R"json({
  "target": {"name": "gaussian", "d": 2, "sigma2": 1.0},
  "method": "mlmc-uld",
  "eps": 0.25,
  "seed": 7,
  "caps": {"max_stages": 10, "max_radius_samples": 32,
           "max_samples_level0": 128, "max_chain_steps": 800},
  "overrides": {"pilot_samples": 8}
})json";

}  // namespace

TEST_CASE("config parsing validates fields with names in errors") {
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_run_config(R"({"target":{"name":"gaussian","d":2,"sigma2":1.0},"eps":0.0})"),
      doctest::Contains("eps"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_run_config(R"({"target":{"name":"gaussian","d":2,"sigma2":-1.0}})"),
      doctest::Contains("sigma2"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"target":{"name":"bogus"}})"), ConfigError);
  RunConfig ok = parse_run_config(kSmallConfig);
  CHECK(ok.method == "mlmc-uld");
  CHECK(ok.pipeline.max_stages == 10);
}

TEST_CASE("estimate emits a report with finite z and positive queries") {
  spit("cli_small.json", kSmallConfig);
  int rc = run_cli("estimate --config cli_small.json --out cli_small_report.json");
  CHECK(rc == 0);
  std::string report = slurp("cli_small_report.json");
  CHECK(report.find("\"z_hat\"") != std::string::npos);
  CHECK(report.find("\"grad\"") != std::string::npos);
  CHECK(report.find("\"config\"") != std::string::npos);
}

TEST_CASE("estimate runs are byte-identical modulo timing") {
  spit("cli_det.json", kSmallConfig);
  CHECK(run_cli("estimate --config cli_det.json --strip-timing --out cli_det_a.json") == 0);
  CHECK(run_cli("estimate --config cli_det.json --strip-timing --out cli_det_b.json") == 0);
  CHECK(slurp("cli_det_a.json") == slurp("cli_det_b.json"));
  CHECK(!slurp("cli_det_a.json").empty());
}

TEST_CASE("invalid config exits with the config code") {
  spit("cli_bad.json", R"({"target":{"name":"gaussian","d":2,"sigma2":1.0},"eps":0})");
  CHECK(run_cli("estimate --config cli_bad.json") == 2);
  CHECK(run_cli("estimate --config does_not_exist.json") == 2);
}

TEST_CASE("a failed oracle check exits with the acceptance code") {
  // K capped at 8 leaves far more sampling noise than eps = 0.1 tolerates
  spit("cli_checkfail.json", R"json({
    "target": {"name": "gaussian", "d": 2, "sigma2": 1.0},
    "method": "mala", "eps": 0.1, "seed": 2,
    "caps": {"mala_max_samples": 8}
  })json");
  CHECK(run_cli("estimate --config cli_checkfail.json --check") == 4);
}

TEST_CASE("oracle subcommand prints the closed form") {
  CHECK(run_cli_capture("oracle gaussian --lambdas 1 1", "cli_oracle.json") == 0);
  std::string out = slurp("cli_oracle.json");
  CHECK(out.find("1.83787706") != std::string::npos);
}

TEST_CASE("hardgen and hardverify round trip") {
  CHECK(run_cli("hardgen --k 1 --n 4 --types 1,1,1,1 --out cli_hard.json") == 0);
  std::string inst = slurp("cli_hard.json");
  CHECK(inst.find("\"types\"") != std::string::npos);
  CHECK(run_cli("hardverify --in cli_hard.json") == 0);

  // byte-exact round trip through hardgen output
  CHECK(run_cli("hardgen --k 1 --n 4 --types 1,2,1,1 --mode equalized --out cli_hard2.json") ==
        0);
  std::string text = slurp("cli_hard2.json");
  auto parsed = logz::hardness::HardInstance::from_json(text);
  CHECK(parsed.to_json() + "\n" == text);
}

TEST_CASE("sample subcommand writes one row per step") {
  CHECK(run_cli("sample --sampler uld --d 1 --sigma2 1 --eta 0.1 --T 1 --seed 1 "
                "--out cli_trace.csv") == 0);
  std::string trace = slurp("cli_trace.csv");
  int rows = 0;
  for (char c : trace) rows += (c == '\n');
  CHECK(rows == 11);  // header + 10 steps
}

TEST_CASE("bench sweeps and reports exact query counts") {
  spit("cli_bench.json", R"json({
    "methods": ["mala"],
    "ds": [2, 4],
    "kappas": [1.0],
    "eps": [0.3],
    "seeds": [1],
    "template": {"caps": {"mala_max_samples": 64}},
    "out": "cli_bench_out.csv"
  })json");
  CHECK(run_cli("bench --config cli_bench.json") == 0);
  std::string csv = slurp("cli_bench_out.csv");
  int rows = 0;
  for (char c : csv) rows += (c == '\n');
  CHECK(rows == 3);  // header + 2 rows
  CHECK(csv.find("method,d,kappa,eps,queries,rel_error,seconds,seed") == 0);
}

TEST_SUITE_END();
