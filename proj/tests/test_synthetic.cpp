#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "kpisentinel/synthetic.hpp"
#include "test_support.hpp"

using namespace kpisentinel;
using test_support::TempDir;
using test_support::read_text;

namespace {

void write_all(const SyntheticData& data, const TempDir& dir) {
  write_cells(dir.file("cells.csv"), data.cells);
  write_neighbors(dir.file("neighbors.csv"), data.cells);
  write_pm(dir.file("pm.csv"), data.pm);
  write_speedmap(dir.file("speedmap.csv"), data.waypoints);
}

/// Independent HOSR recomputation straight from the raw counters.
double oracle_hosr(const PmRecord& r) {
  return 100.0 * static_cast<double>(r.ho_success) / static_cast<double>(r.ho_attempts);
}

/// Mean HOSR of the given cells over [start_hour, start_hour + len), read
/// back from a written pm.csv file.
double windowed_mean_hosr(const std::string& pm_path, const std::vector<std::string>& cell_ids,
                          HourStamp series_start, int start_hour, int len) {
  const auto records = parse_pm(pm_path);
  double sum = 0.0;
  int count = 0;
  for (const auto& r : records) {
    const std::int64_t t = r.timestamp - series_start;
    if (t < start_hour || t >= start_hour + len) continue;
    bool member = false;
    for (const auto& id : cell_ids)
      if (id == r.cell_id) {
        member = true;
        break;
      }
    if (!member || r.ho_attempts == 0) continue;
    sum += oracle_hosr(r);
    ++count;
  }
  REQUIRE(count > 0);
  return sum / count;
}

}  // namespace

TEST_CASE("generator is byte-deterministic for a fixed seed", "[synthetic]") {
  GeneratorConfig config;
  config.cells = 12;
  config.weeks = 1;
  TempDir a("gen_a"), b("gen_b");
  write_all(generate_synthetic(config, 7), a);
  write_all(generate_synthetic(config, 7), b);
  for (const char* name : {"cells.csv", "neighbors.csv", "pm.csv", "speedmap.csv"}) {
    INFO(name);
    CHECK(read_text(a.file(name)) == read_text(b.file(name)));
  }
  // A different seed must change the telemetry.
  TempDir c("gen_c");
  write_all(generate_synthetic(config, 8), c);
  CHECK(read_text(a.file("pm.csv")) != read_text(c.file("pm.csv")));
}

TEST_CASE("zero-magnitude anomaly reproduces the clean run exactly", "[synthetic]") {
  GeneratorConfig clean;
  clean.cells = 9;
  clean.weeks = 1;
  GeneratorConfig with_noop = clean;
  with_noop.anomalies.push_back({KpiKind::HOSR, 0, 10, 24, 0.0});

  TempDir a("noop_a"), b("noop_b");
  write_all(generate_synthetic(clean, 42), a);
  write_all(generate_synthetic(with_noop, 42), b);
  for (const char* name : {"cells.csv", "neighbors.csv", "pm.csv", "speedmap.csv"}) {
    INFO(name);
    CHECK(read_text(a.file(name)) == read_text(b.file(name)));
  }
}

TEST_CASE("anomaly windows outside the series are rejected", "[synthetic]") {
  GeneratorConfig config;
  config.cells = 6;
  config.weeks = 1;
  config.anomalies.push_back({KpiKind::HOSR, 0, 150, 72, -5.0});  // 150 + 72 > 168
  CHECK_THROWS_AS(generate_synthetic(config, 1), ValueError);

  GeneratorConfig bad_blob;
  bad_blob.cells = 6;
  bad_blob.weeks = 1;
  bad_blob.anomalies.push_back({KpiKind::HOSR, 9, 0, 24, -5.0});
  CHECK_THROWS_AS(generate_synthetic(bad_blob, 1), ValueError);
}

TEST_CASE("a 5-sigma 72h HOSR shift moves the windowed mean by at least 3 sigma",
          "[synthetic][oracle]") {
  const double sigma = generator_noise_sigma(KpiKind::HOSR);
  GeneratorConfig clean;
  clean.cells = 12;
  clean.weeks = 1;
  GeneratorConfig shifted = clean;
  shifted.anomalies.push_back({KpiKind::HOSR, 0, 48, 72, -5.0});

  const auto clean_data = generate_synthetic(clean, 99);
  const auto shifted_data = generate_synthetic(shifted, 99);

  TempDir a("win_a"), b("win_b");
  write_all(clean_data, a);
  write_all(shifted_data, b);

  std::vector<std::string> affected;
  for (std::size_t i = 0; i < clean_data.cells.size(); ++i)
    if (clean_data.blob_of_cell[i] == 0) affected.push_back(clean_data.cells[i].cell_id);
  REQUIRE_FALSE(affected.empty());

  const double mean_clean =
      windowed_mean_hosr(a.file("pm.csv"), affected, clean.start, 48, 72);
  const double mean_shifted =
      windowed_mean_hosr(b.file("pm.csv"), affected, clean.start, 48, 72);
  CHECK(std::fabs(mean_shifted - mean_clean) >= 3.0 * sigma);

  // Cells outside the scheduled blob are untouched.
  std::vector<std::string> unaffected;
  for (std::size_t i = 0; i < clean_data.cells.size(); ++i)
    if (clean_data.blob_of_cell[i] != 0) unaffected.push_back(clean_data.cells[i].cell_id);
  const double other_clean =
      windowed_mean_hosr(a.file("pm.csv"), unaffected, clean.start, 48, 72);
  const double other_shifted =
      windowed_mean_hosr(b.file("pm.csv"), unaffected, clean.start, 48, 72);
  CHECK(other_clean == other_shifted);
}

TEST_CASE("a full synthetic week lands every sample in its matrix slot", "[synthetic][oracle]") {
  GeneratorConfig config;
  config.cells = 200;
  config.weeks = 1;
  const auto data = generate_synthetic(config, 3);
  REQUIRE(data.cells.size() == 200);
  REQUIRE(data.pm.size() == 200u * 168u);

  std::vector<std::string> ids;
  for (const auto& c : data.cells) ids.push_back(c.cell_id);
  const auto samples = compute_kpis(data.pm);
  const auto built = build_kpi_matrix(samples, ids, KpiKind::DL_TRAFFIC, config.start, 168);
  CHECK(built.out_of_range == 0);
  REQUIRE(built.matrix.cells() == 200);
  REQUIRE(built.matrix.hours() == 168);

  // Every record's traffic value must sit at its (cell, hour) slot.
  std::size_t row = 0;
  std::unordered_map<std::string, std::size_t> row_of;
  for (const auto& id : ids) row_of[id] = row++;
  for (const auto& r : data.pm) {
    const std::size_t i = row_of.at(r.cell_id);
    const std::size_t j = static_cast<std::size_t>(r.timestamp - config.start);
    CHECK(built.matrix.values[i][j] == r.dl_pdcp_volume_mb);
  }
}

TEST_CASE("generated records respect counter invariants and waypoint ranges", "[synthetic]") {
  GeneratorConfig config;
  config.cells = 30;
  config.weeks = 2;
  config.anomalies.push_back({KpiKind::DL_THROUGHPUT, 1, 100, 60, -6.0});
  const auto data = generate_synthetic(config, 21);
  for (const auto& r : data.pm) {
    CHECK(r.ho_success >= 0);
    CHECK(r.ho_success <= r.ho_attempts);
    CHECK(r.rrc_success >= 0);
    CHECK(r.rrc_success <= r.rrc_attempts);
    CHECK(r.dl_pdcp_volume_mb >= 0.0);
    CHECK(r.dl_active_time_s >= 0.0);
  }
  for (const auto& w : data.waypoints) {
    CHECK(w.speed_kmh >= 0.0);
    CHECK(w.speed_kmh <= 100.0);
  }
  // Round-trip through files must reproduce the records bit for bit.
  TempDir dir("inv");
  write_pm(dir.file("pm.csv"), data.pm);
  CHECK(parse_pm(dir.file("pm.csv")) == data.pm);
}
