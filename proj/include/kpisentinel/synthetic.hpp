#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kpisentinel/geo.hpp"
#include "kpisentinel/ingest.hpp"
#include "kpisentinel/rng.hpp"
#include "kpisentinel/timeutil.hpp"

namespace kpisentinel {

/// A geographic group of cells sharing a speed profile.
struct BlobSpec {
  double center_lat = 60.17;
  double center_lon = 24.94;
  double spread_km = 3.0;
  double speed_kmh = 50.0;  // mean posted speed around the blob, [0, 100]
  int waypoints = 300;
};

/// A scheduled trend shift: all cells of one blob, one KPI, a contiguous
/// hour window, magnitude expressed in units of that KPI's noise sigma.
struct AnomalySpec {
  KpiKind kpi = KpiKind::HOSR;
  int blob = 0;
  int start_hour = 0;
  int duration_hours = 0;
  double magnitude_sigma = 0.0;
};

struct GeneratorConfig {
  int cells = 200;
  int weeks = 2;
  HourStamp start = 482256;  // 2025-01-06T00:00:00Z, a Monday
  std::vector<BlobSpec> blobs;  // empty selects the default three-blob layout
  std::vector<AnomalySpec> anomalies;
  int neighbors_per_cell = 6;
};

struct SyntheticData {
  std::vector<CellInfo> cells;
  std::vector<PmRecord> pm;
  std::vector<SpeedWaypoint> waypoints;
  std::vector<int> blob_of_cell;
};

namespace synth_detail {

struct KpiShape {
  double base;
  double daily_amplitude;
  double noise_sigma;
};

inline KpiShape shape_of(KpiKind k) {
  switch (k) {
    case KpiKind::HOSR: return {93.0, 2.0, 1.0};
    case KpiKind::DL_THROUGHPUT: return {30.0, 10.0, 3.0};
    case KpiKind::DL_TRAFFIC: return {400.0, 200.0, 40.0};
    case KpiKind::RRC_SR: return {96.0, 1.0, 0.6};
  }
  return {0.0, 0.0, 1.0};
}

inline double round_to(double v, int decimals) {
  double scale = 1.0;
  for (int i = 0; i < decimals; ++i) scale *= 10.0;
  return std::round(v * scale) / scale;
}

inline std::string travel_mode_for(double speed) {
  if (speed < 7.0) return "walking";
  if (speed < 20.0) return "cycling";
  if (speed < 50.0) return "transit";
  return "driving";
}

}  // namespace synth_detail

inline std::vector<BlobSpec> default_blobs() {
  return {
      {60.17, 24.94, 3.0, 30.0, 300},
      {60.45, 25.60, 3.0, 60.0, 300},
      {61.00, 24.40, 3.0, 90.0, 300},
  };
}

/// Noise sigma used to scale anomaly magnitudes for one KPI.
inline double generator_noise_sigma(KpiKind k) { return synth_detail::shape_of(k).noise_sigma; }

/// Deterministic synthetic telemetry. Clean per-cell KPI targets are a daily
/// sinusoid with weekend-damped amplitude plus Gaussian noise; scheduled
/// anomalies add a constant shift over their window before the targets are
/// folded back into raw counters.
inline SyntheticData generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  using synth_detail::round_to;
  using synth_detail::shape_of;

  if (config.cells < 1) throw ValueError("generate_synthetic: cells must be >= 1");
  if (config.weeks < 0) throw ValueError("generate_synthetic: weeks must be >= 0");
  const std::vector<BlobSpec> blobs = config.blobs.empty() ? default_blobs() : config.blobs;
  const int total_hours = config.weeks * kHoursPerWeek;
  for (const auto& a : config.anomalies) {
    if (a.blob < 0 || a.blob >= static_cast<int>(blobs.size()))
      throw ValueError("generate_synthetic: anomaly blob index out of range");
    if (a.duration_hours < 1) throw ValueError("generate_synthetic: anomaly duration must be >= 1");
    if (a.start_hour < 0 || a.start_hour + a.duration_hours > total_hours)
      throw ValueError("generate_synthetic: anomaly window exceeds the series length");
  }

  SyntheticData data;
  Rng rng(derive_seed(seed, 0x6b7069736e74ULL));

  // Cells live in contiguous index ranges per blob.
  const int n_blobs = static_cast<int>(blobs.size());
  std::vector<int> blob_count(n_blobs, config.cells / n_blobs);
  for (int b = 0; b < config.cells % n_blobs; ++b) ++blob_count[b];

  int digits = 1;
  for (int v = config.cells; v >= 10; v /= 10) ++digits;
  digits = std::max(digits, 4);

  int cell_index = 0;
  for (int b = 0; b < n_blobs; ++b) {
    LocalProjection proj(blobs[b].center_lat, blobs[b].center_lon);
    for (int i = 0; i < blob_count[b]; ++i, ++cell_index) {
      const double x = rng.normal(0.0, blobs[b].spread_km);
      const double y = rng.normal(0.0, blobs[b].spread_km);
      double lat, lon;
      proj.to_degrees(x, y, lat, lon);
      CellInfo c;
      std::string num = std::to_string(cell_index);
      if (static_cast<int>(num.size()) < digits)
        num.insert(0, static_cast<std::size_t>(digits) - num.size(), '0');
      c.cell_id = "C" + num;
      const int site = cell_index / 3;
      c.site_name = "site-" + std::to_string(site);
      c.enb_id = "E" + std::to_string(site);
      c.latitude = round_to(lat, 6);
      c.longitude = round_to(lon, 6);
      c.bearing = static_cast<double>((cell_index % 3) * 120);
      data.cells.push_back(std::move(c));
      data.blob_of_cell.push_back(b);
    }
  }

  // Neighbors: nearest cells within the same blob, by great-circle distance.
  int offset = 0;
  for (int b = 0; b < n_blobs; ++b) {
    const int count = blob_count[b];
    for (int i = 0; i < count; ++i) {
      auto& cell = data.cells[static_cast<std::size_t>(offset + i)];
      std::vector<std::pair<double, int>> dist;
      dist.reserve(static_cast<std::size_t>(count) - 1);
      for (int j = 0; j < count; ++j) {
        if (j == i) continue;
        const auto& other = data.cells[static_cast<std::size_t>(offset + j)];
        dist.push_back({haversine(cell.latitude, cell.longitude, other.latitude, other.longitude),
                        offset + j});
      }
      std::sort(dist.begin(), dist.end());
      const int k = std::min<int>(config.neighbors_per_cell, static_cast<int>(dist.size()));
      for (int j = 0; j < k; ++j)
        cell.neighbor_ids.push_back(data.cells[static_cast<std::size_t>(dist[j].second)].cell_id);
    }
    offset += count;
  }

  // Waypoints around each blob center.
  for (int b = 0; b < n_blobs; ++b) {
    LocalProjection proj(blobs[b].center_lat, blobs[b].center_lon);
    for (int i = 0; i < blobs[b].waypoints; ++i) {
      const double x = rng.normal(0.0, blobs[b].spread_km * 1.2);
      const double y = rng.normal(0.0, blobs[b].spread_km * 1.2);
      double lat, lon;
      proj.to_degrees(x, y, lat, lon);
      SpeedWaypoint w;
      w.latitude = round_to(lat, 6);
      w.longitude = round_to(lon, 6);
      w.speed_kmh = std::clamp(round_to(rng.normal(blobs[b].speed_kmh, 7.0), 1), 0.0, 100.0);
      w.travel_mode = synth_detail::travel_mode_for(w.speed_kmh);
      data.waypoints.push_back(std::move(w));
    }
  }

  if (total_hours == 0) return data;

  // Per-cell personality: level offsets per KPI plus a phase jitter.
  const int n = config.cells;
  std::vector<std::array<double, kKpiCount>> level(static_cast<std::size_t>(n));
  std::vector<double> phase(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < kKpiCount; ++k)
      level[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          rng.normal(0.0, 0.3 * shape_of(all_kpis()[static_cast<std::size_t>(k)]).noise_sigma);
    phase[static_cast<std::size_t>(i)] = rng.uniform(-1.5, 1.5);
  }

  data.pm.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(total_hours));
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < total_hours; ++t) {
      const HourStamp stamp = config.start + t;
      const int how = hour_of_week(stamp);
      const int hod = how % kHoursPerDay;
      const bool weekend = (how / kHoursPerDay) >= 5;
      const double weekly = weekend ? 0.65 : 1.0;
      const double daily =
          std::sin(2.0 * 3.141592653589793 *
                   (static_cast<double>(hod) - 9.0 + phase[static_cast<std::size_t>(i)]) / 24.0);
      const double shape_t = daily * weekly;

      const double activity =
          std::clamp(0.55 + 0.35 * shape_t + rng.normal(0.0, 0.05), 0.05, 1.2);

      std::array<double, kKpiCount> target;
      for (int k = 0; k < kKpiCount; ++k) {
        const auto sh = shape_of(all_kpis()[static_cast<std::size_t>(k)]);
        target[static_cast<std::size_t>(k)] = sh.base +
                                              level[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                                              sh.daily_amplitude * shape_t +
                                              rng.normal(0.0, sh.noise_sigma);
      }

      // Scheduled shifts are applied after all draws so that a zero-magnitude
      // schedule reproduces the clean run byte for byte.
      for (const auto& a : config.anomalies) {
        if (data.blob_of_cell[static_cast<std::size_t>(i)] != a.blob) continue;
        if (t < a.start_hour || t >= a.start_hour + a.duration_hours) continue;
        const int k = static_cast<int>(a.kpi);
        target[static_cast<std::size_t>(k)] +=
            a.magnitude_sigma * shape_of(a.kpi).noise_sigma;
      }

      PmRecord r;
      r.cell_id = data.cells[static_cast<std::size_t>(i)].cell_id;
      r.timestamp = stamp;

      // Attempt volumes stay in the hundreds even at night so the rate KPIs
      // quantize well below their noise sigma.
      const double hosr = std::clamp(target[0], 0.0, 100.0);
      r.ho_attempts = 120 + static_cast<std::int64_t>(std::lround(400.0 * activity));
      r.ho_success = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::lround(static_cast<double>(r.ho_attempts) * hosr / 100.0)),
          0, r.ho_attempts);

      const double thr = std::max(0.5, target[1]);
      const double traffic = synth_detail::round_to(std::max(1.0, target[2]), 3);
      r.dl_pdcp_volume_mb = traffic;
      r.dl_active_time_s = synth_detail::round_to(std::clamp(traffic * 8.0 / thr, 1.0, 3600.0), 3);

      const double rrc = std::clamp(target[3], 0.0, 100.0);
      r.rrc_attempts = 250 + static_cast<std::int64_t>(std::lround(700.0 * activity));
      r.rrc_success = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::lround(static_cast<double>(r.rrc_attempts) * rrc / 100.0)),
          0, r.rrc_attempts);

      data.pm.push_back(std::move(r));
    }
  }
  return data;
}

}  // namespace kpisentinel
