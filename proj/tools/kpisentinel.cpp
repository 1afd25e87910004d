// kpisentinel: mobile-network KPI clustering, anomaly detection and
// next-hour forecasting from CSV telemetry.
//
// Exit codes: 0 success, 2 configuration or input errors, 1 anything else.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpisentinel/kpisentinel.hpp"

namespace ks = kpisentinel;
namespace fs = std::filesystem;

namespace {

struct PipelineCli {
  std::string config_path;
  bool lax = false;
  std::map<std::string, std::string> storage;
  std::vector<std::pair<std::string, CLI::Option*>> passed;

  void add_option(CLI::App* cmd, const std::string& key, const std::string& flag,
                  const std::string& desc) {
    auto* opt = cmd->add_option(flag, storage[key], desc);
    passed.push_back({key, opt});
  }

  void attach(CLI::App* cmd, bool with_inputs, bool with_model) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_flag("--lax", lax, "warn about unknown config keys instead of failing");
    if (with_inputs) {
      add_option(cmd, "cells", "--cells", "cells.csv path");
      add_option(cmd, "neighbors", "--neighbors", "neighbors.csv path");
      add_option(cmd, "pm", "--pm", "pm.csv path");
      add_option(cmd, "speedmap", "--speedmap", "speedmap.csv path");
      add_option(cmd, "clusters", "--clusters", "clusters.csv path (defaults to <out>/clusters.csv)");
    }
    add_option(cmd, "out", "--out", "output directory");
    add_option(cmd, "K", "--k", "number of clusters (default 11)");
    add_option(cmd, "seed", "--seed", "RNG seed; required for stochastic stages");
    add_option(cmd, "jobs", "--jobs", "parallel workers (0 = auto)");
    if (with_model) {
      add_option(cmd, "W", "--window", "feature window length W (default 48)");
      add_option(cmd, "m_T", "--max-lag", "AR maximum lag m_T (default 20)");
      add_option(cmd, "learning_rate", "--learning-rate", "boosting learning rate (default 1)");
      add_option(cmd, "n_estimators", "--estimators", "boosting stages (default 10)");
      add_option(cmd, "threshold", "--threshold", "anomaly score threshold (default 3.0)");
      add_option(cmd, "min_run", "--min-run", "consecutive hours above threshold (default 4)");
      add_option(cmd, "scope", "--scope", "forecast model scope: cell or cluster");
      add_option(cmd, "refit_every", "--refit-every", "steps between model refits (default 1)");
      add_option(cmd, "fill", "--fill", "fill missing samples before analysis (default true)");
      add_option(cmd, "features_csv", "--features-csv", "optional feature dump file name");
    }
  }

  ks::ConfigMap resolve() const {
    ks::ConfigMap entries;
    if (!config_path.empty()) entries = ks::parse_config_file(config_path);
    ks::apply_env_overrides(entries);
    for (const auto& [key, opt] : passed)
      if (opt->count() > 0) entries.push_back({key, storage.at(key)});
    return entries;
  }
};

ks::PipelineConfig resolve_config(const PipelineCli& cli) {
  auto result = ks::validate_config(cli.resolve(), !cli.lax);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (!result.ok()) {
    for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";
    throw ks::ConfigError("invalid configuration (" + std::to_string(result.errors.size()) +
                          " error(s))");
  }
  return result.config;
}

void require_input(const std::string& path, const std::string& key) {
  if (path.empty()) throw ks::ConfigError(key + ": input path not set");
  if (!fs::exists(path)) throw ks::ConfigError(key + ": file not found: " + path);
}

std::string clusters_path_of(const ks::PipelineConfig& config) {
  if (!config.clusters_path.empty()) return config.clusters_path;
  return (fs::path(config.out_dir) / "clusters.csv").string();
}

// --------------------------------------------------------------------------
// generate
// --------------------------------------------------------------------------

struct GenerateCli {
  int cells = 200;
  int weeks = 2;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "data";
  std::string start = "2025-01-06T00:00:00Z";
  int neighbors = 6;
  std::vector<std::string> blob_specs;
  std::vector<std::string> anomaly_specs;
};

ks::BlobSpec parse_blob_spec(const std::string& spec) {
  // lat:lon:spread_km:speed_kmh[:waypoints]
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else
      cur.push_back(ch);
  }
  parts.push_back(cur);
  if (parts.size() != 4 && parts.size() != 5)
    throw ks::ConfigError("--blob: expected lat:lon:spread_km:speed_kmh[:waypoints], got '" +
                          spec + "'");
  ks::BlobSpec b;
  try {
    b.center_lat = std::stod(parts[0]);
    b.center_lon = std::stod(parts[1]);
    b.spread_km = std::stod(parts[2]);
    b.speed_kmh = std::stod(parts[3]);
    if (parts.size() == 5) b.waypoints = std::stoi(parts[4]);
  } catch (...) {
    throw ks::ConfigError("--blob: bad number in '" + spec + "'");
  }
  if (b.speed_kmh < 0.0 || b.speed_kmh > 100.0)
    throw ks::ConfigError("--blob: speed must be in [0, 100], got '" + spec + "'");
  return b;
}

ks::AnomalySpec parse_anomaly_spec(const std::string& spec) {
  // KPI:blob:start_hour:duration_hours:magnitude_sigma
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else
      cur.push_back(ch);
  }
  parts.push_back(cur);
  if (parts.size() != 5)
    throw ks::ConfigError(
        "--anomaly: expected KPI:blob:start_hour:duration_hours:magnitude_sigma, got '" + spec +
        "'");
  ks::AnomalySpec a;
  try {
    a.kpi = ks::kpi_from_name(parts[0]);
    a.blob = std::stoi(parts[1]);
    a.start_hour = std::stoi(parts[2]);
    a.duration_hours = std::stoi(parts[3]);
    a.magnitude_sigma = std::stod(parts[4]);
  } catch (const ks::ValueError& e) {
    throw ks::ConfigError(std::string("--anomaly: ") + e.what());
  } catch (...) {
    throw ks::ConfigError("--anomaly: bad number in '" + spec + "'");
  }
  return a;
}

void atomic_rename(const fs::path& tmp, const fs::path& final_path) {
  fs::rename(tmp, final_path);
}

int run_generate(const GenerateCli& cli) {
  if (!cli.seed_set) throw ks::ConfigError("seed: --seed is required for generate");
  ks::GeneratorConfig config;
  config.cells = cli.cells;
  config.weeks = cli.weeks;
  config.start = ks::parse_timestamp(cli.start);
  config.neighbors_per_cell = cli.neighbors;
  for (const auto& s : cli.blob_specs) config.blobs.push_back(parse_blob_spec(s));
  for (const auto& s : cli.anomaly_specs) config.anomalies.push_back(parse_anomaly_spec(s));

  const auto data = ks::generate_synthetic(config, cli.seed);

  fs::create_directories(cli.out);
  const fs::path out(cli.out);
  auto write_atomic = [&](const std::string& name, auto writer) {
    const fs::path tmp = out / (name + ".tmp");
    writer(tmp.string());
    atomic_rename(tmp, out / name);
  };
  write_atomic("cells.csv", [&](const std::string& p) { ks::write_cells(p, data.cells); });
  write_atomic("neighbors.csv", [&](const std::string& p) { ks::write_neighbors(p, data.cells); });
  write_atomic("pm.csv", [&](const std::string& p) { ks::write_pm(p, data.pm); });
  write_atomic("speedmap.csv",
               [&](const std::string& p) { ks::write_speedmap(p, data.waypoints); });

  ks::ordered_json truth;
  truth["seed"] = cli.seed;
  truth["cells"] = config.cells;
  truth["weeks"] = config.weeks;
  truth["start"] = ks::format_timestamp(config.start);
  truth["blobs"] = ks::ordered_json::array();
  const auto blobs = config.blobs.empty() ? ks::default_blobs() : config.blobs;
  for (const auto& b : blobs)
    truth["blobs"].push_back({{"lat", b.center_lat},
                              {"lon", b.center_lon},
                              {"spread_km", b.spread_km},
                              {"speed_kmh", b.speed_kmh},
                              {"waypoints", b.waypoints}});
  truth["anomalies"] = ks::ordered_json::array();
  for (const auto& a : config.anomalies)
    truth["anomalies"].push_back({{"kpi", ks::kpi_name(a.kpi)},
                                  {"blob", a.blob},
                                  {"start_hour", a.start_hour},
                                  {"duration_hours", a.duration_hours},
                                  {"magnitude_sigma", a.magnitude_sigma}});
  truth["blob_of_cell"] = data.blob_of_cell;
  {
    const fs::path tmp = out / "truth.json.tmp";
    std::ofstream f(tmp);
    f << truth.dump(2) << "\n";
    f.close();
    atomic_rename(tmp, out / "truth.json");
  }

  std::cout << "generated " << data.cells.size() << " cells, " << data.pm.size()
            << " pm rows, " << data.waypoints.size() << " waypoints into " << cli.out << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// pipeline stages
// --------------------------------------------------------------------------

int run_cluster(const ks::PipelineConfig& config) {
  require_input(config.cells_path, "cells");
  require_input(config.speedmap_path, "speedmap");
  if (!config.neighbors_path.empty()) require_input(config.neighbors_path, "neighbors");
  ks::ArtifactSink sink(config.out_dir);
  try {
    auto result = ks::stage_cluster(config, sink);
    std::cout << "clustered " << result.partition.assignments.size() << " cells into "
              << result.partition.k << " clusters -> " << sink.path("clusters.csv").string()
              << "\n";
  } catch (...) {
    sink.remove_written();
    throw;
  }
  return 0;
}

std::pair<std::map<std::string, int>, int> load_assignments(const std::string& clusters_path) {
  const auto rows = ks::parse_clusters(clusters_path);
  if (rows.empty()) throw ks::ParseError(clusters_path + ": no cluster rows");
  std::map<std::string, int> assignments;
  int k = 0;
  for (const auto& r : rows) {
    assignments[r.cell_id] = r.cluster;
    k = std::max(k, r.cluster + 1);
  }
  return {assignments, k};
}

int run_detect(const ks::PipelineConfig& config, const std::string& clusters_path) {
  require_input(config.pm_path, "pm");
  require_input(clusters_path, "clusters");
  auto [assignments, k] = load_assignments(clusters_path);
  std::vector<std::string> cell_ids;
  for (const auto& [id, c] : assignments) cell_ids.push_back(id);
  ks::ArtifactSink sink(config.out_dir);
  try {
    auto ds = ks::load_dataset(config, cell_ids);
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
    auto result = ks::stage_detect(config, ds, assignments, k, sink);
    std::cout << "detected " << result.events.size() << " anomaly event(s) -> "
              << sink.path("anomalies.json").string() << "\n";
  } catch (...) {
    sink.remove_written();
    throw;
  }
  return 0;
}

int run_forecast(const ks::PipelineConfig& config, const std::string& clusters_path) {
  require_input(config.pm_path, "pm");
  require_input(clusters_path, "clusters");
  auto [assignments, k] = load_assignments(clusters_path);
  (void)k;
  std::vector<std::string> cell_ids;
  for (const auto& [id, c] : assignments) cell_ids.push_back(id);
  ks::ArtifactSink sink(config.out_dir);
  try {
    auto ds = ks::load_dataset(config, cell_ids);
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
    auto result = ks::stage_forecast(config, ds, assignments, sink);
    std::cout << "forecast " << result.series_forecast << " series ("
              << result.series_skipped << " skipped) -> "
              << sink.path("forecast.csv").string() << "\n";
  } catch (...) {
    sink.remove_written();
    throw;
  }
  return 0;
}

int run_full(const ks::PipelineConfig& config) {
  require_input(config.cells_path, "cells");
  require_input(config.speedmap_path, "speedmap");
  require_input(config.pm_path, "pm");
  if (!config.neighbors_path.empty()) require_input(config.neighbors_path, "neighbors");
  const auto result = ks::run_pipeline(config);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "run complete: " << result.cells << " cells, " << result.clusters
            << " clusters, " << result.events << " anomaly event(s), "
            << result.series_forecast << " series forecast -> " << config.out_dir << "\n";
  return 0;
}

int run_validate(const PipelineCli& cli) {
  auto result = ks::validate_config(cli.resolve(), !cli.lax);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (!result.ok()) {
    for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";
    return 2;
  }
  const auto& c = result.config;
  std::cout << "cells = " << c.cells_path << "\n"
            << "neighbors = " << c.neighbors_path << "\n"
            << "pm = " << c.pm_path << "\n"
            << "speedmap = " << c.speedmap_path << "\n"
            << "out = " << c.out_dir << "\n"
            << "K = " << c.k << "\n"
            << "W = " << c.w << "\n"
            << "m_T = " << c.m_t << "\n"
            << "learning_rate = " << c.learning_rate << "\n"
            << "n_estimators = " << c.n_estimators << "\n"
            << "threshold = " << c.threshold << "\n"
            << "min_run = " << c.min_run << "\n"
            << "seed = " << (c.seed ? std::to_string(*c.seed) : std::string("(unset)")) << "\n"
            << "jobs = " << c.jobs << "\n"
            << "scope = " << c.scope << "\n"
            << "refit_every = " << c.refit_every << "\n"
            << "fill = " << (c.fill ? "true" : "false") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile-network KPI clustering, anomaly detection and forecasting"};
  app.require_subcommand(1);

  GenerateCli gen;
  auto* generate = app.add_subcommand("generate", "Generate seeded synthetic telemetry CSVs");
  generate->add_option("--cells", gen.cells, "number of cells")->capture_default_str();
  generate->add_option("--weeks", gen.weeks, "weeks of hourly PM data")->capture_default_str();
  auto* seed_opt = generate->add_option("--seed", gen.seed, "RNG seed (required)");
  generate->add_option("--out", gen.out, "output directory")->capture_default_str();
  generate->add_option("--start", gen.start, "series start, ISO-8601 UTC hour")
      ->capture_default_str();
  generate->add_option("--neighbors", gen.neighbors, "neighbors per cell")->capture_default_str();
  generate->add_option("--blob", gen.blob_specs,
                       "blob spec lat:lon:spread_km:speed_kmh[:waypoints] (repeatable)");
  generate->add_option("--anomaly", gen.anomaly_specs,
                       "anomaly spec KPI:blob:start_hour:duration_hours:magnitude_sigma "
                       "(repeatable)");

  PipelineCli cluster_cli, detect_cli, forecast_cli, run_cli, validate_cli;
  auto* cluster_cmd =
      app.add_subcommand("cluster", "Estimate cell geometry/speed and build the partition");
  cluster_cli.attach(cluster_cmd, true, false);
  auto* detect_cmd = app.add_subcommand("detect", "Score KPI signatures and report anomalies");
  detect_cli.attach(detect_cmd, true, true);
  auto* forecast_cmd =
      app.add_subcommand("forecast", "Walk-forward next-hour prediction with MAE report");
  forecast_cli.attach(forecast_cmd, true, true);
  auto* run_cmd = app.add_subcommand("run", "Full pipeline: cluster, detect, forecast");
  run_cli.attach(run_cmd, true, true);
  auto* validate_cmd = app.add_subcommand("validate", "Resolve and check the configuration");
  validate_cli.attach(validate_cmd, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(generate)) {
      gen.seed_set = seed_opt->count() > 0;
      return run_generate(gen);
    }
    if (app.got_subcommand(cluster_cmd)) return run_cluster(resolve_config(cluster_cli));
    if (app.got_subcommand(detect_cmd)) {
      auto config = resolve_config(detect_cli);
      return run_detect(config, clusters_path_of(config));
    }
    if (app.got_subcommand(forecast_cmd)) {
      auto config = resolve_config(forecast_cli);
      return run_forecast(config, clusters_path_of(config));
    }
    if (app.got_subcommand(run_cmd)) return run_full(resolve_config(run_cli));
    if (app.got_subcommand(validate_cmd)) return run_validate(validate_cli);
  } catch (const ks::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ks::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
