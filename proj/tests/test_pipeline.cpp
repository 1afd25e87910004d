#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "kpisentinel/pipeline.hpp"
#include "test_support.hpp"

using namespace kpisentinel;
using test_support::TempDir;
using test_support::read_text;
using test_support::write_text;

namespace fs = std::filesystem;

namespace {

/// Runs the CLI binary, capturing exit code and stderr.
struct CliResult {
  int exit_code;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err_file = scratch / "stderr.txt";
  const std::string cmd =
      std::string(KPISENTINEL_CLI_PATH) + " " + args + " 2>" + err_file.string() + " >/dev/null";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_text(err_file.string());
  return r;
}

/// Generates a small input set and returns the data directory.
void generate_inputs(const fs::path& dir, int cells, int weeks, std::uint64_t seed,
                     std::vector<AnomalySpec> anomalies = {}) {
  GeneratorConfig config;
  config.cells = cells;
  config.weeks = weeks;
  config.anomalies = std::move(anomalies);
  const auto data = generate_synthetic(config, seed);
  write_cells((dir / "cells.csv").string(), data.cells);
  write_neighbors((dir / "neighbors.csv").string(), data.cells);
  write_pm((dir / "pm.csv").string(), data.pm);
  write_speedmap((dir / "speedmap.csv").string(), data.waypoints);
}

PipelineConfig small_config(const fs::path& data, const fs::path& out) {
  PipelineConfig c;
  c.cells_path = (data / "cells.csv").string();
  c.neighbors_path = (data / "neighbors.csv").string();
  c.pm_path = (data / "pm.csv").string();
  c.speedmap_path = (data / "speedmap.csv").string();
  c.out_dir = out.string();
  c.k = 3;
  c.w = 24;
  c.refit_every = 8;  // keep the unit-test pipeline quick
  c.seed = 7;
  c.jobs = 2;
  return c;
}

}  // namespace

TEST_CASE("validate_config fills paper defaults from an empty source", "[pipeline][config]") {
  const auto result = validate_config({});
  REQUIRE(result.ok());
  CHECK(result.config.k == 11);
  CHECK(result.config.m_t == 20);
  CHECK(result.config.n_estimators == 10);
  CHECK(result.config.learning_rate == 1.0);
  CHECK(result.config.w == 48);
  CHECK(result.config.threshold == 3.0);
  CHECK(result.config.min_run == 4);
  CHECK(result.config.scope == "cell");
  CHECK(result.config.refit_every == 1);
  CHECK(result.config.fill);
  CHECK_FALSE(result.config.seed.has_value());
}

TEST_CASE("validate_config reports violations by key name", "[pipeline][config]") {
  const auto result = validate_config({{"K", "0"}});
  REQUIRE_FALSE(result.ok());
  REQUIRE(result.errors.size() == 1);
  CHECK(result.errors[0].find("K") == 0);

  const auto multi = validate_config({{"K", "0"}, {"threshold", "-1"}, {"scope", "galaxy"}});
  CHECK(multi.errors.size() == 3);

  const auto nan = validate_config({{"W", "abc"}});
  REQUIRE_FALSE(nan.ok());
  CHECK(nan.errors[0].find("W") == 0);
}

TEST_CASE("validate_config clamps the effective lag with a warning", "[pipeline][config]") {
  const auto result = validate_config({{"W", "10"}, {"m_T", "20"}});
  REQUIRE(result.ok());
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("m_T") == 0);
  CHECK(result.warnings[0].find("4") != std::string::npos);  // min(20, (10-1)/2) = 4
}

TEST_CASE("unknown keys are errors in strict mode, warnings otherwise", "[pipeline][config]") {
  const auto strict = validate_config({{"tomato", "1"}});
  REQUIRE_FALSE(strict.ok());
  CHECK(strict.errors[0].find("tomato") == 0);

  const auto lax = validate_config({{"tomato", "1"}}, false);
  CHECK(lax.ok());
  REQUIRE(lax.warnings.size() == 1);
  CHECK(lax.warnings[0].find("tomato") == 0);
}

TEST_CASE("config file parsing and env overrides compose", "[pipeline][config]") {
  TempDir dir("config");
  write_text(dir.file("pipeline.conf"),
             "# comment line\n"
             "K = 5\n"
             "seed = 99  # trailing comment\n"
             "\n"
             "scope = cluster\n");
  auto entries = parse_config_file(dir.file("pipeline.conf"));
  REQUIRE(entries.size() == 3);

  ::setenv("KPISENTINEL_K", "7", 1);
  apply_env_overrides(entries);
  ::unsetenv("KPISENTINEL_K");

  const auto result = validate_config(entries);
  REQUIRE(result.ok());
  CHECK(result.config.k == 7);  // env wins over the file
  CHECK(result.config.scope == "cluster");
  REQUIRE(result.config.seed.has_value());
  CHECK(*result.config.seed == 99);

  write_text(dir.file("broken.conf"), "K 5\n");
  CHECK_THROWS_AS(parse_config_file(dir.file("broken.conf")), ConfigError);
}

TEST_CASE("run_pipeline emits every artifact and is reproducible", "[pipeline][slow]") {
  TempDir data("pipe_data"), out1("pipe_out1"), out2("pipe_out2");
  generate_inputs(data.path(), 9, 1, 7);

  const auto config1 = small_config(data.path(), out1.path());
  const auto result = run_pipeline(config1);
  CHECK(result.cells == 9);
  CHECK(result.clusters == 3);
  CHECK(result.series_forecast > 0);

  const std::vector<std::string> artifacts = {"clusters.csv", "signatures.csv", "anomalies.json",
                                              "forecast.csv", "metrics.json",
                                              "plots/signature_observed.csv",
                                              "plots/correlation.csv"};
  for (const auto& name : artifacts) {
    INFO(name);
    CHECK(fs::exists(out1.path() / name));
  }

  auto config2 = small_config(data.path(), out2.path());
  config2.jobs = 1;  // parallel schedule must not affect the bytes
  run_pipeline(config2);
  for (const auto& name : artifacts) {
    INFO(name);
    CHECK(read_text((out1.path() / name).string()) == read_text((out2.path() / name).string()));
  }
}

TEST_CASE("run_pipeline cleans up artifacts when a stage fails", "[pipeline]") {
  TempDir data("pipe_fail"), out("pipe_fail_out");
  generate_inputs(data.path(), 9, 1, 7);

  auto config = small_config(data.path(), out.path());
  config.pm_path = (data.path() / "absent.csv").string();
  CHECK_THROWS_AS(run_pipeline(config), ParseError);
  // The cluster stage already wrote clusters.csv; the failure must remove it.
  CHECK_FALSE(fs::exists(out.path() / "clusters.csv"));
}

TEST_CASE("stochastic stages demand a seed", "[pipeline]") {
  TempDir data("pipe_seedless"), out("pipe_seedless_out");
  generate_inputs(data.path(), 9, 1, 7);
  auto config = small_config(data.path(), out.path());
  config.seed.reset();
  CHECK_THROWS_AS(run_pipeline(config), ConfigError);
}

TEST_CASE("detect honors the no-fill flag and skips empty cells", "[pipeline]") {
  TempDir data("pipe_nofill"), out("pipe_nofill_out");
  generate_inputs(data.path(), 9, 1, 7);
  auto config = small_config(data.path(), out.path());
  config.fill = false;
  const auto result = run_pipeline(config);
  CHECK(result.cells == 9);
  CHECK(fs::exists(out.path() / "anomalies.json"));
}

TEST_CASE("CLI: generate then run yields the full artifact set", "[pipeline][cli][slow]") {
  TempDir scratch("cli_run");
  const fs::path data = scratch.path() / "data";
  const fs::path out = scratch.path() / "out";
  fs::create_directories(data);

  auto gen = run_cli("generate --cells 9 --weeks 1 --seed 7 --out " + data.string(), scratch.path());
  REQUIRE(gen.exit_code == 0);
  for (const char* name : {"cells.csv", "neighbors.csv", "pm.csv", "speedmap.csv", "truth.json"})
    CHECK(fs::exists(data / name));

  auto run = run_cli("run --cells " + (data / "cells.csv").string() + " --neighbors " +
                         (data / "neighbors.csv").string() + " --pm " + (data / "pm.csv").string() +
                         " --speedmap " + (data / "speedmap.csv").string() +
                         " --k 3 --window 24 --refit-every 8 --seed 7 --out " + out.string(),
                     scratch.path());
  INFO(run.err);
  REQUIRE(run.exit_code == 0);
  for (const char* name : {"clusters.csv", "signatures.csv", "anomalies.json", "forecast.csv",
                           "metrics.json"})
    CHECK(fs::exists(out / name));
}

TEST_CASE("CLI: missing pm.csv exits 2 and names the path", "[pipeline][cli]") {
  TempDir scratch("cli_missing");
  const fs::path data = scratch.path() / "data";
  fs::create_directories(data);
  generate_inputs(data, 6, 1, 3);

  const std::string missing = (data / "nope.csv").string();
  auto r = run_cli("run --cells " + (data / "cells.csv").string() + " --neighbors " +
                       (data / "neighbors.csv").string() + " --pm " + missing + " --speedmap " +
                       (data / "speedmap.csv").string() + " --k 2 --seed 7 --out " +
                       (scratch.path() / "out").string(),
                   scratch.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("CLI: validate resolves defaults and rejects bad values", "[pipeline][cli]") {
  TempDir scratch("cli_validate");
  auto ok = run_cli("validate", scratch.path());
  CHECK(ok.exit_code == 0);

  auto bad = run_cli("validate --k 0", scratch.path());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("K") != std::string::npos);

  auto clamp = run_cli("validate --window 10 --max-lag 20", scratch.path());
  CHECK(clamp.exit_code == 0);
  CHECK(clamp.err.find("clamped") != std::string::npos);
}

TEST_CASE("CLI: subcommands are required and unknown flags fail", "[pipeline][cli]") {
  TempDir scratch("cli_usage");
  CHECK(run_cli("", scratch.path()).exit_code == 2);
  CHECK(run_cli("frobnicate", scratch.path()).exit_code == 2);
  CHECK(run_cli("generate --does-not-exist 1", scratch.path()).exit_code == 2);
}

TEST_CASE("CLI: cluster/detect/forecast compose like run", "[pipeline][cli][slow]") {
  TempDir scratch("cli_stages");
  const fs::path data = scratch.path() / "data";
  const fs::path out_stages = scratch.path() / "stages";
  const fs::path out_run = scratch.path() / "whole";
  fs::create_directories(data);
  generate_inputs(data, 9, 1, 11);

  const std::string inputs = " --cells " + (data / "cells.csv").string() + " --neighbors " +
                             (data / "neighbors.csv").string() + " --pm " +
                             (data / "pm.csv").string() + " --speedmap " +
                             (data / "speedmap.csv").string();
  const std::string knobs = " --k 3 --window 24 --refit-every 8 --seed 5";

  auto c = run_cli("cluster" + inputs + " --k 3 --seed 5 --out " + out_stages.string(),
                   scratch.path());
  INFO(c.err);
  REQUIRE(c.exit_code == 0);
  auto d = run_cli("detect" + inputs + knobs + " --out " + out_stages.string(), scratch.path());
  INFO(d.err);
  REQUIRE(d.exit_code == 0);
  auto f = run_cli("forecast" + inputs + knobs + " --out " + out_stages.string(), scratch.path());
  INFO(f.err);
  REQUIRE(f.exit_code == 0);

  auto whole = run_cli("run" + inputs + knobs + " --out " + out_run.string(), scratch.path());
  REQUIRE(whole.exit_code == 0);

  for (const char* name : {"clusters.csv", "signatures.csv", "anomalies.json", "forecast.csv",
                           "metrics.json"}) {
    INFO(name);
    CHECK(read_text((out_stages / name).string()) == read_text((out_run / name).string()));
  }
}

TEST_CASE("env overrides reach the CLI", "[pipeline][cli]") {
  TempDir scratch("cli_env");
  ::setenv("KPISENTINEL_K", "0", 1);
  auto r = run_cli("validate", scratch.path());
  ::unsetenv("KPISENTINEL_K");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("K") != std::string::npos);
}
