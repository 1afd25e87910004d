#pragma once

#include <array>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kpisentinel/cluster.hpp"
#include "kpisentinel/forecast.hpp"
#include "kpisentinel/ingest.hpp"
#include "kpisentinel/signatures.hpp"
#include "kpisentinel/synthetic.hpp"

namespace kpisentinel {

using ordered_json = nlohmann::ordered_json;

struct PipelineConfig {
  std::string cells_path;
  std::string neighbors_path;
  std::string pm_path;
  std::string speedmap_path;
  std::string clusters_path;  // consumed by standalone detect/forecast; empty = <out>/clusters.csv
  std::string out_dir = "out";
  int k = 11;
  int w = 48;
  int m_t = 20;
  double learning_rate = 1.0;
  int n_estimators = 10;
  double threshold = 3.0;
  int min_run = 4;
  std::optional<std::uint64_t> seed;
  int jobs = 0;  // 0 picks a machine-dependent worker count; output is identical either way
  std::string scope = "cell";  // "cell" | "cluster"
  int refit_every = 1;
  bool fill = true;
  std::string features_csv;  // optional per-window feature dump

  ForecastConfig forecast_config() const {
    ForecastConfig fc;
    fc.features.window_length = w;
    fc.features.max_lag = m_t;
    fc.boost.n_estimators = n_estimators;
    fc.boost.learning_rate = learning_rate;
    fc.refit_every = refit_every;
    return fc;
  }

  std::uint64_t require_seed(const std::string& stage) const {
    if (!seed)
      throw ConfigError("seed: required for the " + stage +
                        " stage (set seed= in the config, KPISENTINEL_SEED, or --seed)");
    return *seed;
  }
};

// ---------------------------------------------------------------------------
// Configuration sources: key=value file, KPISENTINEL_* environment, flags.
// Later sources win in that order.
// ---------------------------------------------------------------------------

using ConfigMap = std::vector<std::pair<std::string, std::string>>;

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "cells", "neighbors", "pm",       "speedmap",     "clusters",      "out",
      "K",     "W",         "m_T",      "seed",         "jobs",          "scope",
      "fill",  "threshold", "min_run",  "n_estimators", "learning_rate", "refit_every",
      "features_csv"};
  return keys;
}

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ConfigMap entries;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ": line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    entries.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return entries;
}

/// Appends overrides from KPISENTINEL_<KEY> environment variables.
inline void apply_env_overrides(ConfigMap& entries) {
  for (const auto& key : config_keys()) {
    std::string env_name = "KPISENTINEL_";
    for (char c : key) env_name.push_back(static_cast<char>(std::toupper(c)));
    if (const char* v = std::getenv(env_name.c_str())) entries.push_back({key, v});
  }
}

struct ValidationResult {
  PipelineConfig config;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

/// Resolves raw key=value pairs into a PipelineConfig. Every violation is
/// reported with its key name; unknown keys are errors unless strict is off.
inline ValidationResult validate_config(const ConfigMap& entries, bool strict = true) {
  ValidationResult result;
  PipelineConfig& c = result.config;

  auto parse_num = [&](const std::string& key, const std::string& value, auto& out,
                       auto validate) {
    try {
      if constexpr (std::is_same_v<std::decay_t<decltype(out)>, double>)
        out = std::stod(value);
      else
        out = static_cast<std::decay_t<decltype(out)>>(std::stoll(value));
    } catch (...) {
      result.errors.push_back(key + ": not a number: '" + value + "'");
      return;
    }
    validate();
  };

  for (const auto& [key, value] : entries) {
    if (key == "cells") c.cells_path = value;
    else if (key == "neighbors") c.neighbors_path = value;
    else if (key == "pm") c.pm_path = value;
    else if (key == "speedmap") c.speedmap_path = value;
    else if (key == "clusters") c.clusters_path = value;
    else if (key == "out") c.out_dir = value;
    else if (key == "features_csv") c.features_csv = value;
    else if (key == "K")
      parse_num(key, value, c.k, [&] {
        if (c.k < 1) result.errors.push_back("K: must be >= 1, got " + value);
      });
    else if (key == "W")
      parse_num(key, value, c.w, [&] {
        if (c.w < 2) result.errors.push_back("W: must be >= 2, got " + value);
      });
    else if (key == "m_T")
      parse_num(key, value, c.m_t, [&] {
        if (c.m_t < 1) result.errors.push_back("m_T: must be >= 1, got " + value);
      });
    else if (key == "learning_rate")
      parse_num(key, value, c.learning_rate, [&] {
        if (!(c.learning_rate > 0.0))
          result.errors.push_back("learning_rate: must be > 0, got " + value);
      });
    else if (key == "n_estimators")
      parse_num(key, value, c.n_estimators, [&] {
        if (c.n_estimators < 1) result.errors.push_back("n_estimators: must be >= 1, got " + value);
      });
    else if (key == "threshold")
      parse_num(key, value, c.threshold, [&] {
        if (!(c.threshold > 0.0)) result.errors.push_back("threshold: must be > 0, got " + value);
      });
    else if (key == "min_run")
      parse_num(key, value, c.min_run, [&] {
        if (c.min_run < 1) result.errors.push_back("min_run: must be >= 1, got " + value);
      });
    else if (key == "refit_every")
      parse_num(key, value, c.refit_every, [&] {
        if (c.refit_every < 1) result.errors.push_back("refit_every: must be >= 1, got " + value);
      });
    else if (key == "jobs")
      parse_num(key, value, c.jobs, [&] {
        if (c.jobs < 0) result.errors.push_back("jobs: must be >= 0, got " + value);
      });
    else if (key == "seed") {
      std::uint64_t s = 0;
      try {
        s = std::stoull(value);
        c.seed = s;
      } catch (...) {
        result.errors.push_back("seed: not a non-negative integer: '" + value + "'");
      }
    } else if (key == "scope") {
      if (value != "cell" && value != "cluster")
        result.errors.push_back("scope: must be 'cell' or 'cluster', got '" + value + "'");
      else
        c.scope = value;
    } else if (key == "fill") {
      if (value == "true" || value == "1") c.fill = true;
      else if (value == "false" || value == "0") c.fill = false;
      else result.errors.push_back("fill: must be true/false, got '" + value + "'");
    } else {
      if (strict)
        result.errors.push_back(key + ": unknown key");
      else
        result.warnings.push_back(key + ": unknown key, ignored");
    }
  }

  FeatureConfig fc{c.w, c.m_t};
  if (result.errors.empty() && fc.effective_lag() < c.m_t)
    result.warnings.push_back("m_T: effective AR lag clamped to " +
                              std::to_string(fc.effective_lag()) + " by W = " +
                              std::to_string(c.w));
  return result;
}

// ---------------------------------------------------------------------------
// Artifact tracking: every file is written to <name>.tmp and renamed into
// place; on failure everything this run produced is removed.
// ---------------------------------------------------------------------------

class ArtifactSink {
 public:
  explicit ArtifactSink(const std::string& out_dir) : dir_(out_dir) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  /// Writes content through a temporary file and renames it into place.
  void write_file(const std::string& name, const std::string& content) {
    const auto final_path = dir_ / name;
    if (final_path.has_parent_path()) std::filesystem::create_directories(final_path.parent_path());
    const auto tmp_path = final_path.string() + ".tmp";
    {
      std::ofstream out(tmp_path, std::ios::binary);
      if (!out) throw ValueError("cannot open " + tmp_path + " for writing");
      out << content;
      if (!out.good()) throw ValueError("write failed for " + tmp_path);
    }
    std::filesystem::rename(tmp_path, final_path);
    written_.push_back(final_path);
  }

  void remove_written() {
    std::error_code ec;
    for (const auto& p : written_) std::filesystem::remove(p, ec);
    written_.clear();
  }

  const std::vector<std::filesystem::path>& written() const { return written_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
};

/// Builds CSV content in memory; pairs with ArtifactSink::write_file.
class CsvBuffer {
 public:
  explicit CsvBuffer(const std::vector<std::string>& header) { row(header); }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) content_.push_back(',');
      content_ += fields[i];
    }
    content_.push_back('\n');
  }

  const std::string& str() const { return content_; }

 private:
  std::string content_;
};

/// Runs fn(0..count) on up to `jobs` worker threads. Tasks write results
/// into caller-owned slots by index, so scheduling never changes output.
template <typename Fn>
inline void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  if (count == 0) return;
  int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, 8));
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Stage: cluster
// ---------------------------------------------------------------------------

struct ClusterStageResult {
  std::vector<CellGeometry> geometries;
  ClusterPartition partition;
};

inline ClusterStageResult stage_cluster(const PipelineConfig& config, ArtifactSink& sink) {
  auto cells = parse_cells(config.cells_path);
  if (!config.neighbors_path.empty()) parse_neighbors(config.neighbors_path, cells);
  const auto waypoints = parse_speedmap(config.speedmap_path);

  ClusterStageResult result;
  result.geometries = estimate_geometries(cells, waypoints);
  result.partition = cluster_cells(result.geometries, config.k, config.require_seed("cluster"));

  CsvBuffer csv(clusters_header());
  std::vector<const CellGeometry*> sorted;
  for (const auto& g : result.geometries) sorted.push_back(&g);
  std::sort(sorted.begin(), sorted.end(),
            [](const CellGeometry* a, const CellGeometry* b) { return a->cell_id < b->cell_id; });
  for (const auto* g : sorted)
    csv.row({g->cell_id, std::to_string(result.partition.assignments.at(g->cell_id)),
             format_double(g->mean_speed_kmh), format_double(g->radius_km)});
  sink.write_file("clusters.csv", csv.str());
  return result;
}

// ---------------------------------------------------------------------------
// Shared dataset: per-KPI matrices plus normalized per-cell series.
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<std::string> cell_ids;  // sorted
  HourStamp start = 0;
  int hours = 0;
  std::array<KpiMatrix, kKpiCount> matrices;    // filled per config.fill
  std::array<KpiMatrix, kKpiCount> normalized;  // per-cell min-max of the above
  std::size_t out_of_range_samples = 0;
  std::vector<std::string> warnings;
};

inline Dataset load_dataset(const PipelineConfig& config,
                            const std::vector<std::string>& cell_ids_sorted) {
  const auto records = parse_pm(config.pm_path);
  if (records.empty()) throw ParseError(config.pm_path + ": no PM rows");
  HourStamp lo = records[0].timestamp, hi = records[0].timestamp;
  for (const auto& r : records) {
    lo = std::min(lo, r.timestamp);
    hi = std::max(hi, r.timestamp);
  }
  Dataset ds;
  ds.cell_ids = cell_ids_sorted;
  ds.start = lo;
  ds.hours = static_cast<int>(hi - lo + 1);
  if (ds.hours < 2) throw ValueError(config.pm_path + ": need at least two hours of data");

  const auto samples = compute_kpis(records);
  for (int k = 0; k < kKpiCount; ++k) {
    auto built = build_kpi_matrix(samples, ds.cell_ids, all_kpis()[static_cast<std::size_t>(k)],
                                  ds.start, ds.hours);
    ds.out_of_range_samples += built.out_of_range;
    if (config.fill) fill_missing(built.matrix);
    ds.matrices[static_cast<std::size_t>(k)] = std::move(built.matrix);

    KpiMatrix norm = ds.matrices[static_cast<std::size_t>(k)];
    for (std::size_t row = 0; row < norm.values.size(); ++row) {
      bool any = false;
      for (double v : norm.values[row])
        if (!is_missing(v)) {
          any = true;
          break;
        }
      if (!any) {
        ds.warnings.push_back("cell " + norm.cell_ids[row] + ": no " +
                              kpi_name(norm.kind) + " samples, excluded");
        continue;
      }
      norm.values[row] = normalize(norm.values[row]);
    }
    ds.normalized[static_cast<std::size_t>(k)] = std::move(norm);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Stage: detect
// ---------------------------------------------------------------------------

struct DetectStageResult {
  AnomalyReport events;
  std::vector<ClusterSignature> last_week_signatures;  // one per (cluster, kpi) with data
};

namespace pipeline_detail {

/// Reference weeks for scored week w: up to four nearest other complete
/// weeks, preferring earlier ones.
inline std::vector<int> reference_weeks(int scored, int total_weeks, int max_weeks = 4) {
  std::vector<int> ref;
  for (int w = scored - 1; w >= 0 && static_cast<int>(ref.size()) < max_weeks; --w)
    ref.push_back(w);
  for (int w = scored + 1; w < total_weeks && static_cast<int>(ref.size()) < max_weeks; ++w)
    ref.push_back(w);
  std::sort(ref.begin(), ref.end());
  return ref;
}

inline std::vector<std::size_t> cluster_rows(const std::vector<std::string>& cell_ids,
                                             const std::map<std::string, int>& assignments,
                                             int cluster) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cell_ids.size(); ++i) {
    auto it = assignments.find(cell_ids[i]);
    if (it != assignments.end() && it->second == cluster) rows.push_back(i);
  }
  return rows;
}

inline std::vector<double> slice(const std::vector<double>& row, int from, int len) {
  return std::vector<double>(row.begin() + from, row.begin() + from + len);
}

}  // namespace pipeline_detail

inline DetectStageResult stage_detect(const PipelineConfig& config, const Dataset& ds,
                                      const std::map<std::string, int>& assignments, int k,
                                      ArtifactSink& sink) {
  using pipeline_detail::cluster_rows;
  using pipeline_detail::reference_weeks;
  using pipeline_detail::slice;

  const int weeks = ds.hours / kHoursPerWeek;
  if (weeks < 1)
    throw ValueError("detect: need at least one complete week of PM data, have " +
                     std::to_string(ds.hours) + " hours");
  const int start_how = hour_of_week(ds.start);

  DetectStageResult result;

  struct Task {
    int cluster;
    int kpi;
    std::vector<std::size_t> rows;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < k; ++c) {
    const auto rows = cluster_rows(ds.cell_ids, assignments, c);
    if (rows.empty()) continue;
    for (int kpi = 0; kpi < kKpiCount; ++kpi) tasks.push_back({c, kpi, rows});
  }

  struct TaskOutput {
    AnomalyReport events;
    ClusterSignature last_signature;
    std::vector<double> last_week_observed;
    bool valid = false;
  };
  std::vector<TaskOutput> outputs(tasks.size());

  parallel_for(tasks.size(), config.jobs, [&](std::size_t ti) {
    const Task& task = tasks[ti];
    const KpiMatrix& matrix = ds.normalized[static_cast<std::size_t>(task.kpi)];
    const KpiKind kind = all_kpis()[static_cast<std::size_t>(task.kpi)];

    // Member rows that actually have data.
    std::vector<const std::vector<double>*> members;
    for (std::size_t r : task.rows) {
      bool any = false;
      for (double v : matrix.values[r])
        if (!is_missing(v)) {
          any = true;
          break;
        }
      if (any) members.push_back(&matrix.values[r]);
    }
    if (members.empty()) return;

    TaskOutput& out = outputs[ti];
    for (int w = 0; w < weeks; ++w) {
      ClusterSignature sig;
      if (weeks == 1) {
        std::vector<std::vector<double>> week_rows;
        for (const auto* m : members) week_rows.push_back(slice(*m, 0, kHoursPerWeek));
        sig = single_week_signature(week_rows, start_how, task.cluster, kind);
      } else {
        std::vector<std::vector<double>> ref_rows;
        for (int rw : reference_weeks(w, weeks))
          for (const auto* m : members)
            ref_rows.push_back(slice(*m, rw * kHoursPerWeek, kHoursPerWeek));
        sig = cluster_signature(ref_rows, start_how, task.cluster, kind);
      }

      std::vector<std::vector<double>> week_rows;
      for (const auto* m : members) week_rows.push_back(slice(*m, w * kHoursPerWeek, kHoursPerWeek));
      const auto med = median_series(week_rows);
      const auto events = detect_anomalies(med, start_how, static_cast<std::int64_t>(w) * kHoursPerWeek,
                                           sig, config.threshold, config.min_run);
      out.events.insert(out.events.end(), events.begin(), events.end());
      if (w == weeks - 1) {
        out.last_signature = sig;
        out.last_week_observed = med;
        out.valid = true;
      }
    }
  });

  for (auto& out : outputs) {
    result.events.insert(result.events.end(), out.events.begin(), out.events.end());
    if (out.valid) result.last_week_signatures.push_back(out.last_signature);
  }
  std::sort(result.events.begin(), result.events.end(), [](const AnomalyEvent& a, const AnomalyEvent& b) {
    if (a.cluster != b.cluster) return a.cluster < b.cluster;
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    return a.start_hour < b.start_hour;
  });

  // anomalies.json
  ordered_json events_json = ordered_json::array();
  for (const auto& ev : result.events) {
    ordered_json e;
    e["cluster"] = ev.cluster;
    e["kpi"] = kpi_name(ev.kind);
    e["start_hour"] = ev.start_hour;
    e["end_hour"] = ev.end_hour;
    e["start_time"] = format_timestamp(ds.start + ev.start_hour);
    e["end_time"] = format_timestamp(ds.start + ev.end_hour);
    e["peak_score"] = ev.peak_score;  // +inf serializes as null (zero dispersion sentinel)
    e["direction"] = ev.direction;
    e["zero_dispersion"] = ev.zero_dispersion;
    events_json.push_back(std::move(e));
  }
  sink.write_file("anomalies.json", events_json.dump(2) + "\n");

  // signatures.csv: the reference in force for the most recent week.
  CsvBuffer sig_csv({"cluster", "kpi", "hour_of_week", "reference", "dispersion"});
  for (const auto& out : outputs) {
    if (!out.valid) continue;
    for (int h = 0; h < kHoursPerWeek; ++h)
      sig_csv.row({std::to_string(out.last_signature.cluster),
                   kpi_name(out.last_signature.kind), std::to_string(h),
                   format_double(out.last_signature.reference[static_cast<std::size_t>(h)]),
                   format_double(out.last_signature.dispersion[static_cast<std::size_t>(h)])});
  }
  sink.write_file("signatures.csv", sig_csv.str());

  // Plot data: last scored week, observed cluster median vs reference.
  CsvBuffer plot_csv({"cluster", "kpi", "hour_of_week", "reference", "observed_median"});
  for (const auto& out : outputs) {
    if (!out.valid) continue;
    for (int i = 0; i < kHoursPerWeek; ++i) {
      const int h = (start_how + i) % kHoursPerWeek;
      const double obs = out.last_week_observed[static_cast<std::size_t>(i)];
      plot_csv.row({std::to_string(out.last_signature.cluster), kpi_name(out.last_signature.kind),
                    std::to_string(h),
                    format_double(out.last_signature.reference[static_cast<std::size_t>(h)]),
                    is_missing(obs) ? "" : format_double(obs)});
    }
  }
  sink.write_file("plots/signature_observed.csv", plot_csv.str());

  // Plot data: per-cluster KPI correlation over the whole span.
  CsvBuffer corr_csv({"cluster", "kpi_a", "kpi_b", "pearson"});
  for (int c = 0; c < k; ++c) {
    const auto rows = cluster_rows(ds.cell_ids, assignments, c);
    if (rows.empty()) continue;
    std::array<std::vector<double>, kKpiCount> medians;
    bool usable = true;
    for (int kpi = 0; kpi < kKpiCount; ++kpi) {
      std::vector<std::vector<double>> member_rows;
      for (std::size_t r : rows) {
        const auto& row = ds.normalized[static_cast<std::size_t>(kpi)].values[r];
        bool any = false;
        for (double v : row)
          if (!is_missing(v)) {
            any = true;
            break;
          }
        if (any) member_rows.push_back(row);
      }
      if (member_rows.empty()) {
        usable = false;
        break;
      }
      medians[static_cast<std::size_t>(kpi)] = median_series(member_rows);
    }
    if (!usable) continue;
    const auto corr = cluster_correlation(medians);
    for (int a = 0; a < kKpiCount; ++a)
      for (int b = 0; b < kKpiCount; ++b) {
        const double v = corr[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        corr_csv.row({std::to_string(c), kpi_name(all_kpis()[static_cast<std::size_t>(a)]),
                      kpi_name(all_kpis()[static_cast<std::size_t>(b)]),
                      is_missing(v) ? "" : format_double(v)});
      }
  }
  sink.write_file("plots/correlation.csv", corr_csv.str());

  return result;
}

// ---------------------------------------------------------------------------
// Stage: forecast
// ---------------------------------------------------------------------------

struct ForecastStageResult {
  std::size_t series_forecast = 0;
  std::size_t series_skipped = 0;
};

inline ForecastStageResult stage_forecast(const PipelineConfig& config, const Dataset& ds,
                                          const std::map<std::string, int>& assignments,
                                          ArtifactSink& sink) {
  const ForecastConfig fc = config.forecast_config();
  const std::uint64_t seed = config.require_seed("forecast");
  const int min_len = fc.features.window_length + fc.boost.min_rows + 1;

  ForecastStageResult result;

  struct SeriesRef {
    std::size_t cell;
    int kpi;
  };
  std::vector<SeriesRef> series;
  for (std::size_t i = 0; i < ds.cell_ids.size(); ++i)
    for (int kpi = 0; kpi < kKpiCount; ++kpi) {
      const auto& row = ds.normalized[static_cast<std::size_t>(kpi)].values[i];
      std::size_t finite = 0;
      for (double v : row)
        if (!is_missing(v)) ++finite;
      if (static_cast<int>(finite) >= min_len && static_cast<int>(row.size()) >= min_len)
        series.push_back({i, kpi});
      else
        ++result.series_skipped;
    }

  std::vector<std::vector<ForecastPoint>> points(series.size());

  if (config.scope == "cluster") {
    // Group series by (cluster, kpi); one pooled model per step per group.
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t si = 0; si < series.size(); ++si) {
      auto it = assignments.find(ds.cell_ids[series[si].cell]);
      const int cluster = it == assignments.end() ? -1 : it->second;
      groups[{cluster, series[si].kpi}].push_back(si);
    }
    std::vector<std::pair<std::pair<int, int>, std::vector<std::size_t>>> group_list(
        groups.begin(), groups.end());
    parallel_for(group_list.size(), config.jobs, [&](std::size_t gi) {
      const auto& [key, members] = group_list[gi];
      std::vector<std::vector<double>> member_series;
      for (std::size_t si : members)
        member_series.push_back(
            ds.normalized[static_cast<std::size_t>(series[si].kpi)].values[series[si].cell]);
      const std::uint64_t group_seed =
          derive_seed(seed, static_cast<std::uint64_t>(key.first) * 16 +
                                static_cast<std::uint64_t>(key.second));
      auto member_points = walk_forward_pooled(member_series, fc, group_seed);
      for (std::size_t m = 0; m < members.size(); ++m)
        points[members[m]] = std::move(member_points[m]);
    });
  } else {
    parallel_for(series.size(), config.jobs, [&](std::size_t si) {
      const auto& s = series[si];
      const auto& row = ds.normalized[static_cast<std::size_t>(s.kpi)].values[s.cell];
      const std::uint64_t series_seed =
          derive_seed(seed, static_cast<std::uint64_t>(s.cell) * 16 +
                                static_cast<std::uint64_t>(s.kpi));
      points[si] = walk_forward(row, fc, series_seed);
    });
  }

  result.series_forecast = series.size();

  // forecast.csv, ordered by (cell, kpi, t).
  CsvBuffer forecast_csv({"cell_id", "kpi", "timestamp", "true", "predicted", "last_value"});
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    for (const auto& p : points[si])
      forecast_csv.row({ds.cell_ids[s.cell], kpi_name(all_kpis()[static_cast<std::size_t>(s.kpi)]),
                        format_timestamp(ds.start + p.target_index), format_double(p.y_true),
                        format_double(p.y_model), format_double(p.y_baseline)});
  }
  sink.write_file("forecast.csv", forecast_csv.str());

  // metrics.json: MAE triplets per (cell, kpi) and per (cluster, kpi).
  ordered_json metrics;
  metrics["per_cell"] = ordered_json::array();
  std::map<std::pair<int, int>, std::vector<ForecastPoint>> by_cluster;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (points[si].empty()) continue;
    const MaeTriplet m = evaluate_points(points[si]);
    ordered_json e;
    e["cell_id"] = ds.cell_ids[s.cell];
    e["kpi"] = kpi_name(all_kpis()[static_cast<std::size_t>(s.kpi)]);
    e["points"] = m.points;
    e["mae_model_vs_true"] = m.model_vs_true;
    e["mae_baseline_vs_true"] = m.baseline_vs_true;
    e["mae_model_vs_baseline"] = m.model_vs_baseline;
    metrics["per_cell"].push_back(std::move(e));
    auto it = assignments.find(ds.cell_ids[s.cell]);
    if (it != assignments.end()) {
      auto& pool = by_cluster[{it->second, s.kpi}];
      pool.insert(pool.end(), points[si].begin(), points[si].end());
    }
  }
  metrics["per_cluster"] = ordered_json::array();
  for (const auto& [key, pool] : by_cluster) {
    const MaeTriplet m = evaluate_points(pool);
    ordered_json e;
    e["cluster"] = key.first;
    e["kpi"] = kpi_name(all_kpis()[static_cast<std::size_t>(key.second)]);
    e["points"] = m.points;
    e["mae_model_vs_true"] = m.model_vs_true;
    e["mae_baseline_vs_true"] = m.baseline_vs_true;
    e["mae_model_vs_baseline"] = m.model_vs_baseline;
    metrics["per_cluster"].push_back(std::move(e));
  }
  sink.write_file("metrics.json", metrics.dump(2) + "\n");

  // Optional per-window feature dump.
  if (!config.features_csv.empty()) {
    std::vector<std::string> header = {"cell_id", "kpi", "t", "timestamp"};
    for (const auto& n : feature_names(fc.features)) header.push_back(n);
    CsvBuffer feat_csv(header);
    for (std::size_t si = 0; si < series.size(); ++si) {
      const auto& s = series[si];
      const auto& row = ds.normalized[static_cast<std::size_t>(s.kpi)].values[s.cell];
      TrainingSet set;
      try {
        set = build_training_set(row, fc.features);
      } catch (const ValueError&) {
        continue;
      }
      for (std::size_t r = 0; r < set.rows.size(); ++r) {
        std::vector<std::string> fields = {
            ds.cell_ids[s.cell], kpi_name(all_kpis()[static_cast<std::size_t>(s.kpi)]),
            std::to_string(set.target_indices[r]),
            format_timestamp(ds.start + set.target_indices[r])};
        for (double v : set.rows[r]) fields.push_back(format_double(v));
        feat_csv.row(fields);
      }
    }
    sink.write_file(config.features_csv, feat_csv.str());
  }

  return result;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct PipelineResult {
  std::size_t clusters = 0;
  std::size_t cells = 0;
  std::size_t events = 0;
  std::size_t series_forecast = 0;
  std::vector<std::string> warnings;
};

/// cluster -> detect -> forecast, writing every artifact into config.out_dir.
/// Any failure removes the artifacts this invocation already produced.
inline PipelineResult run_pipeline(const PipelineConfig& config) {
  ArtifactSink sink(config.out_dir);
  try {
    PipelineResult result;
    auto clustered = stage_cluster(config, sink);
    result.clusters = static_cast<std::size_t>(clustered.partition.k);

    std::vector<std::string> cell_ids;
    for (const auto& [id, cluster] : clustered.partition.assignments) cell_ids.push_back(id);
    Dataset ds = load_dataset(config, cell_ids);
    result.cells = ds.cell_ids.size();
    result.warnings = ds.warnings;

    auto detected =
        stage_detect(config, ds, clustered.partition.assignments, config.k, sink);
    result.events = detected.events.size();

    auto forecast = stage_forecast(config, ds, clustered.partition.assignments, sink);
    result.series_forecast = forecast.series_forecast;
    return result;
  } catch (...) {
    sink.remove_written();
    throw;
  }
}

}  // namespace kpisentinel
