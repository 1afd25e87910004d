#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kpisentinel/csv.hpp"
#include "kpisentinel/timeutil.hpp"
#include "kpisentinel/util.hpp"

namespace kpisentinel {

/// Static configuration/inventory record for one cell.
struct CellInfo {
  std::string cell_id;
  std::string site_name;
  std::string enb_id;
  double latitude = 0.0;   // degrees WGS84, [-90, 90]
  double longitude = 0.0;  // degrees WGS84, [-180, 180]
  double bearing = 0.0;    // degrees, [0, 360)
  std::vector<std::string> neighbor_ids;

  bool operator==(const CellInfo&) const = default;
};

/// One hour of raw performance counters for one cell.
struct PmRecord {
  std::string cell_id;
  HourStamp timestamp = 0;
  std::int64_t ho_success = 0;
  std::int64_t ho_attempts = 0;
  double dl_pdcp_volume_mb = 0.0;
  double dl_active_time_s = 0.0;
  std::int64_t rrc_success = 0;
  std::int64_t rrc_attempts = 0;

  bool operator==(const PmRecord&) const = default;
};

struct SpeedWaypoint {
  double latitude = 0.0;
  double longitude = 0.0;
  double speed_kmh = 0.0;  // [0, 100]
  std::string travel_mode; // driving | walking | cycling | transit

  bool operator==(const SpeedWaypoint&) const = default;
};

enum class KpiKind { HOSR, DL_THROUGHPUT, DL_TRAFFIC, RRC_SR };

constexpr int kKpiCount = 4;

inline const char* kpi_name(KpiKind k) {
  switch (k) {
    case KpiKind::HOSR: return "HOSR";
    case KpiKind::DL_THROUGHPUT: return "DL_THROUGHPUT";
    case KpiKind::DL_TRAFFIC: return "DL_TRAFFIC";
    case KpiKind::RRC_SR: return "RRC_SR";
  }
  return "?";
}

inline KpiKind kpi_from_name(const std::string& s) {
  if (s == "HOSR") return KpiKind::HOSR;
  if (s == "DL_THROUGHPUT") return KpiKind::DL_THROUGHPUT;
  if (s == "DL_TRAFFIC") return KpiKind::DL_TRAFFIC;
  if (s == "RRC_SR") return KpiKind::RRC_SR;
  throw ValueError("unknown KPI '" + s + "'");
}

inline const std::vector<KpiKind>& all_kpis() {
  static const std::vector<KpiKind> kinds = {KpiKind::HOSR, KpiKind::DL_THROUGHPUT,
                                             KpiKind::DL_TRAFFIC, KpiKind::RRC_SR};
  return kinds;
}

/// One derived KPI sample; value is empty when the denominator counter was zero.
struct KpiSample {
  std::string cell_id;
  HourStamp timestamp = 0;
  KpiKind kind = KpiKind::HOSR;
  std::optional<double> value;
};

/// Dense N x m matrix of hourly KPI values, one row per cell.
/// Absent samples are NaN (see is_missing), never 0.
struct KpiMatrix {
  KpiKind kind = KpiKind::HOSR;
  std::vector<std::string> cell_ids;
  std::vector<std::vector<double>> values;  // [cell][hour]
  HourStamp start_time = 0;
  int granularity_hours = 1;

  std::size_t cells() const { return cell_ids.size(); }
  std::size_t hours() const { return values.empty() ? 0 : values[0].size(); }
};

// ---------------------------------------------------------------------------
// File schemas (UTF-8, comma-separated, header mandatory, '.' decimal mark)
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& cells_header() {
  static const std::vector<std::string> h = {"cell_id", "site_name", "enb_id",
                                             "lat",     "lon",       "bearing"};
  return h;
}

inline const std::vector<std::string>& neighbors_header() {
  static const std::vector<std::string> h = {"source_cell_id", "target_cell_id"};
  return h;
}

inline const std::vector<std::string>& pm_header() {
  static const std::vector<std::string> h = {
      "cell_id",           "timestamp",        "ho_success",  "ho_attempts",
      "dl_pdcp_volume_mb", "dl_active_time_s", "rrc_success", "rrc_attempts"};
  return h;
}

inline const std::vector<std::string>& speedmap_header() {
  static const std::vector<std::string> h = {"lat", "lon", "speed_kmh", "travel_mode"};
  return h;
}

namespace detail {

inline void check_range(double v, double lo, double hi, const char* what, const std::string& file,
                        std::size_t line, std::size_t column) {
  if (!(v >= lo && v <= hi))
    throw ParseError(file + ": line " + std::to_string(line) + ", column " +
                     std::to_string(column) + ": " + what + " " + format_double(v) +
                     " outside [" + format_double(lo) + ", " + format_double(hi) + "]");
}

inline std::int64_t parse_count(const std::string& field, const std::string& file,
                                std::size_t line, std::size_t column) {
  const std::int64_t v = parse_int(field, file, line, column);
  if (v < 0)
    throw ParseError(file + ": line " + std::to_string(line) + ", column " +
                     std::to_string(column) + ": count must be >= 0, got " + field);
  return v;
}

}  // namespace detail

/// Parses cells.csv. Duplicate cell ids are an error.
inline std::vector<CellInfo> parse_cells(const std::string& path) {
  CsvReader reader(path, cells_header());
  std::vector<CellInfo> cells;
  std::unordered_set<std::string> seen;
  std::vector<std::string> row;
  while (reader.next(row)) {
    CellInfo c;
    c.cell_id = row[0];
    if (c.cell_id.empty())
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ", column 1: empty cell_id");
    if (!seen.insert(c.cell_id).second)
      throw ParseError(path + ": duplicate cell_id '" + c.cell_id + "' at line " +
                       std::to_string(reader.line()));
    c.site_name = row[1];
    c.enb_id = row[2];
    c.latitude = parse_double(row[3], path, reader.line(), 4);
    detail::check_range(c.latitude, -90.0, 90.0, "latitude", path, reader.line(), 4);
    c.longitude = parse_double(row[4], path, reader.line(), 5);
    detail::check_range(c.longitude, -180.0, 180.0, "longitude", path, reader.line(), 5);
    c.bearing = parse_double(row[5], path, reader.line(), 6);
    if (!(c.bearing >= 0.0 && c.bearing < 360.0))
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ", column 6: bearing " + format_double(c.bearing) + " outside [0, 360)");
    cells.push_back(std::move(c));
  }
  return cells;
}

/// Parses neighbors.csv and attaches neighbor lists to the given cells.
/// Unknown source ids and self-references are errors; unknown targets are
/// kept as unresolvable neighbors (downstream treats them as dangling).
inline void parse_neighbors(const std::string& path, std::vector<CellInfo>& cells) {
  std::unordered_map<std::string, CellInfo*> by_id;
  for (auto& c : cells) by_id[c.cell_id] = &c;
  CsvReader reader(path, neighbors_header());
  std::vector<std::string> row;
  while (reader.next(row)) {
    const std::string& src = row[0];
    const std::string& dst = row[1];
    auto it = by_id.find(src);
    if (it == by_id.end())
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ": unknown source_cell_id '" + src + "'");
    if (src == dst)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ": cell '" + src + "' listed as its own neighbor");
    it->second->neighbor_ids.push_back(dst);
  }
}

/// Parses pm.csv. Counter invariants (success <= attempts, counts >= 0) are
/// enforced here; duplicate (cell, hour) rows are an error.
inline std::vector<PmRecord> parse_pm(const std::string& path) {
  CsvReader reader(path, pm_header());
  std::vector<PmRecord> records;
  std::set<std::pair<std::string, HourStamp>> seen;
  std::vector<std::string> row;
  while (reader.next(row)) {
    PmRecord r;
    r.cell_id = row[0];
    try {
      r.timestamp = parse_timestamp(row[1]);
    } catch (const ParseError& e) {
      throw ParseError(path + ": line " + std::to_string(reader.line()) + ", column 2: " +
                       e.what());
    }
    r.ho_success = detail::parse_count(row[2], path, reader.line(), 3);
    r.ho_attempts = detail::parse_count(row[3], path, reader.line(), 4);
    if (r.ho_success > r.ho_attempts)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ": ho_success exceeds ho_attempts");
    r.dl_pdcp_volume_mb = parse_double(row[4], path, reader.line(), 5);
    if (r.dl_pdcp_volume_mb < 0.0)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ", column 5: dl_pdcp_volume_mb must be >= 0");
    r.dl_active_time_s = parse_double(row[5], path, reader.line(), 6);
    if (r.dl_active_time_s < 0.0)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ", column 6: dl_active_time_s must be >= 0");
    r.rrc_success = detail::parse_count(row[6], path, reader.line(), 7);
    r.rrc_attempts = detail::parse_count(row[7], path, reader.line(), 8);
    if (r.rrc_success > r.rrc_attempts)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ": rrc_success exceeds rrc_attempts");
    if (!seen.insert({r.cell_id, r.timestamp}).second)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ": duplicate sample for cell '" + r.cell_id + "' at " + row[1]);
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<SpeedWaypoint> parse_speedmap(const std::string& path) {
  CsvReader reader(path, speedmap_header());
  std::vector<SpeedWaypoint> points;
  std::vector<std::string> row;
  while (reader.next(row)) {
    SpeedWaypoint w;
    w.latitude = parse_double(row[0], path, reader.line(), 1);
    detail::check_range(w.latitude, -90.0, 90.0, "latitude", path, reader.line(), 1);
    w.longitude = parse_double(row[1], path, reader.line(), 2);
    detail::check_range(w.longitude, -180.0, 180.0, "longitude", path, reader.line(), 2);
    w.speed_kmh = parse_double(row[2], path, reader.line(), 3);
    detail::check_range(w.speed_kmh, 0.0, 100.0, "speed_kmh", path, reader.line(), 3);
    w.travel_mode = row[3];
    if (w.travel_mode != "driving" && w.travel_mode != "walking" && w.travel_mode != "cycling" &&
        w.travel_mode != "transit")
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ", column 4: unknown travel_mode '" + w.travel_mode + "'");
    points.push_back(std::move(w));
  }
  return points;
}

inline void write_cells(const std::string& path, const std::vector<CellInfo>& cells) {
  CsvWriter out(path, cells_header());
  for (const auto& c : cells)
    out.write_row({c.cell_id, c.site_name, c.enb_id, format_double(c.latitude),
                   format_double(c.longitude), format_double(c.bearing)});
}

inline void write_neighbors(const std::string& path, const std::vector<CellInfo>& cells) {
  CsvWriter out(path, neighbors_header());
  for (const auto& c : cells)
    for (const auto& n : c.neighbor_ids) out.write_row({c.cell_id, n});
}

inline void write_pm(const std::string& path, const std::vector<PmRecord>& records) {
  CsvWriter out(path, pm_header());
  for (const auto& r : records)
    out.write_row({r.cell_id, format_timestamp(r.timestamp), std::to_string(r.ho_success),
                   std::to_string(r.ho_attempts), format_double(r.dl_pdcp_volume_mb),
                   format_double(r.dl_active_time_s), std::to_string(r.rrc_success),
                   std::to_string(r.rrc_attempts)});
}

inline void write_speedmap(const std::string& path, const std::vector<SpeedWaypoint>& points) {
  CsvWriter out(path, speedmap_header());
  for (const auto& w : points)
    out.write_row({format_double(w.latitude), format_double(w.longitude),
                   format_double(w.speed_kmh), w.travel_mode});
}

// ---------------------------------------------------------------------------
// KPI derivation
// ---------------------------------------------------------------------------

// Downlink throughput: PDCP bytes are carried as (decimal) megabytes, so
// Mbps = mb * 8e6 bits / active seconds / 1e6 = mb * 8 / s.
// A zero denominator marks the sample missing rather than failing.
inline std::vector<KpiSample> compute_kpis(const std::vector<PmRecord>& records) {
  std::vector<KpiSample> samples;
  samples.reserve(records.size() * kKpiCount);
  for (const auto& r : records) {
    if (r.ho_success > r.ho_attempts || r.rrc_success > r.rrc_attempts)
      throw ValueError("compute_kpis: success counter exceeds attempts for cell '" + r.cell_id +
                       "'");
    if (r.ho_success < 0 || r.rrc_success < 0 || r.dl_pdcp_volume_mb < 0.0 ||
        r.dl_active_time_s < 0.0)
      throw ValueError("compute_kpis: negative counter for cell '" + r.cell_id + "'");

    KpiSample hosr{r.cell_id, r.timestamp, KpiKind::HOSR, std::nullopt};
    if (r.ho_attempts > 0)
      hosr.value = 100.0 * static_cast<double>(r.ho_success) / static_cast<double>(r.ho_attempts);

    KpiSample thr{r.cell_id, r.timestamp, KpiKind::DL_THROUGHPUT, std::nullopt};
    if (r.dl_active_time_s > 0.0) thr.value = r.dl_pdcp_volume_mb * 8.0 / r.dl_active_time_s;

    KpiSample traffic{r.cell_id, r.timestamp, KpiKind::DL_TRAFFIC, r.dl_pdcp_volume_mb};

    KpiSample rrc{r.cell_id, r.timestamp, KpiKind::RRC_SR, std::nullopt};
    if (r.rrc_attempts > 0)
      rrc.value =
          100.0 * static_cast<double>(r.rrc_success) / static_cast<double>(r.rrc_attempts);

    samples.push_back(std::move(hosr));
    samples.push_back(std::move(thr));
    samples.push_back(std::move(traffic));
    samples.push_back(std::move(rrc));
  }
  return samples;
}

struct MatrixBuildResult {
  KpiMatrix matrix;
  std::size_t out_of_range = 0;  // samples outside [start, start + m) that were ignored
};

/// Assembles the dense matrix for one KPI. Samples for unknown cells or for
/// another KPI kind are ignored silently; in-window samples land at their
/// (cell, hour) slot and everything else stays NaN.
inline MatrixBuildResult build_kpi_matrix(const std::vector<KpiSample>& samples,
                                          const std::vector<std::string>& cell_ids,
                                          KpiKind kind, HourStamp start, int m) {
  if (m < 2) throw ValueError("build_kpi_matrix: m must be >= 2");
  if (cell_ids.empty()) throw ValueError("build_kpi_matrix: cell_ids must be nonempty");

  MatrixBuildResult result;
  result.matrix.kind = kind;
  result.matrix.cell_ids = cell_ids;
  result.matrix.start_time = start;
  result.matrix.values.assign(cell_ids.size(),
                              std::vector<double>(static_cast<std::size_t>(m), missing_value()));

  std::unordered_map<std::string, std::size_t> row_of;
  row_of.reserve(cell_ids.size());
  for (std::size_t i = 0; i < cell_ids.size(); ++i) row_of[cell_ids[i]] = i;

  for (const auto& s : samples) {
    if (s.kind != kind) continue;
    auto it = row_of.find(s.cell_id);
    if (it == row_of.end()) continue;
    const std::int64_t col = s.timestamp - start;
    if (col < 0 || col >= m) {
      ++result.out_of_range;
      continue;
    }
    if (s.value) result.matrix.values[it->second][static_cast<std::size_t>(col)] = *s.value;
  }
  return result;
}

/// Fills missing entries in place: linear interpolation between the nearest
/// non-missing neighbors, nearest value at the edges. Rows with no data at
/// all are left untouched.
inline void fill_missing(std::vector<double>& row) {
  const std::size_t n = row.size();
  std::size_t first = n, last = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_missing(row[i])) {
      if (first == n) first = i;
      last = i;
    }
  }
  if (first == n) return;
  for (std::size_t i = 0; i < first; ++i) row[i] = row[first];
  for (std::size_t i = last + 1; i < n; ++i) row[i] = row[last];
  std::size_t i = first;
  while (i < last) {
    if (!is_missing(row[i + 1])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (is_missing(row[j])) ++j;
    const double step = (row[j] - row[i]) / static_cast<double>(j - i);
    for (std::size_t k = i + 1; k < j; ++k)
      row[k] = row[i] + step * static_cast<double>(k - i);
    i = j;
  }
}

inline void fill_missing(KpiMatrix& matrix) {
  for (auto& row : matrix.values) fill_missing(row);
}

}  // namespace kpisentinel
