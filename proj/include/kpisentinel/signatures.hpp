#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "kpisentinel/ingest.hpp"
#include "kpisentinel/timeutil.hpp"
#include "kpisentinel/util.hpp"

namespace kpisentinel {

constexpr double kDispersionEpsilon = 1e-6;  // guards zero dispersion, normalized units

/// Min-max normalization into [0, 1] using the series' own non-missing
/// extrema. A constant series maps to 0.5 everywhere; missing entries pass
/// through untouched.
inline std::vector<double> normalize(const std::vector<double>& series) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : series) {
    if (is_missing(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo <= hi)) throw ValueError("normalize: series has no non-missing values");
  std::vector<double> out(series.size());
  const double range = hi - lo;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (is_missing(series[i]))
      out[i] = missing_value();
    else
      out[i] = range > 0.0 ? (series[i] - lo) / range : 0.5;
  }
  return out;
}

/// Trend/remainder split. The trend is the order-24 centered moving average
/// (25 taps, half weight on the endpoints), with a plain shrinking-window
/// mean where the full window does not fit. Missing values are skipped.
inline void decompose(const std::vector<double>& series, std::vector<double>& trend,
                      std::vector<double>& remainder) {
  const std::size_t n = series.size();
  if (n < 25) throw ValueError("decompose: series length must be >= 25");
  trend.assign(n, missing_value());
  remainder.assign(n, missing_value());
  const std::ptrdiff_t half = 12;
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(n); ++t) {
    const bool full = t - half >= 0 && t + half < static_cast<std::ptrdiff_t>(n);
    double sum = 0.0, weight = 0.0;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, t + half);
    for (std::ptrdiff_t s = lo; s <= hi; ++s) {
      const double v = series[static_cast<std::size_t>(s)];
      if (is_missing(v)) continue;
      const double w = full && (s == t - half || s == t + half) ? 0.5 : 1.0;
      sum += w * v;
      weight += w;
    }
    if (weight > 0.0) {
      trend[static_cast<std::size_t>(t)] = sum / weight;
      remainder[static_cast<std::size_t>(t)] =
          series[static_cast<std::size_t>(t)] - trend[static_cast<std::size_t>(t)];
    }
  }
}

/// Hour-of-week reference profile and robust dispersion for one (cluster, KPI).
struct ClusterSignature {
  int cluster = 0;
  KpiKind kind = KpiKind::HOSR;
  std::array<double, kHoursPerWeek> reference{};
  std::array<double, kHoursPerWeek> dispersion{};
  std::vector<int> interpolated_hours;  // reference hours with no samples anywhere
};

namespace sig_detail {

/// Circular linear interpolation for hour-of-week slots with no samples.
inline void interpolate_ring(std::array<double, kHoursPerWeek>& ring,
                             const std::array<bool, kHoursPerWeek>& known) {
  int n_known = 0;
  for (bool b : known) n_known += b ? 1 : 0;
  if (n_known == 0) throw ValueError("signature: no samples at any hour of week");
  if (n_known == kHoursPerWeek) return;
  for (int h = 0; h < kHoursPerWeek; ++h) {
    if (known[static_cast<std::size_t>(h)]) continue;
    int prev = h, next = h, back = 0, fwd = 0;
    while (!known[static_cast<std::size_t>(prev)]) {
      prev = (prev + kHoursPerWeek - 1) % kHoursPerWeek;
      ++back;
    }
    while (!known[static_cast<std::size_t>(next)]) {
      next = (next + 1) % kHoursPerWeek;
      ++fwd;
    }
    const double span = static_cast<double>(back + fwd);
    ring[static_cast<std::size_t>(h)] =
        ring[static_cast<std::size_t>(prev)] +
        (ring[static_cast<std::size_t>(next)] - ring[static_cast<std::size_t>(prev)]) *
            (static_cast<double>(back) / span);
  }
}

}  // namespace sig_detail

/// Builds the reference signature from member-cell rows covering whole weeks.
/// reference[h] is the median over every (cell, week) sample at hour-of-week
/// h; dispersion[h] is the scaled MAD of that same sample set. Hours with no
/// samples anywhere are interpolated circularly and flagged.
inline ClusterSignature cluster_signature(const std::vector<std::vector<double>>& member_rows,
                                          int start_hour_of_week, int cluster, KpiKind kind) {
  if (member_rows.empty()) throw ValueError("cluster_signature: at least one cell required");
  const std::size_t len = member_rows[0].size();
  if (len < kHoursPerWeek || len % kHoursPerWeek != 0)
    throw ValueError("cluster_signature: rows must cover at least one complete week");
  for (const auto& row : member_rows)
    if (row.size() != len) throw ValueError("cluster_signature: row lengths differ");

  ClusterSignature sig;
  sig.cluster = cluster;
  sig.kind = kind;

  std::array<std::vector<double>, kHoursPerWeek> buckets;
  for (std::size_t j = 0; j < len; ++j) {
    const int h = (start_hour_of_week + static_cast<int>(j % kHoursPerWeek)) % kHoursPerWeek;
    for (const auto& row : member_rows) {
      const double v = row[j];
      if (!is_missing(v)) buckets[static_cast<std::size_t>(h)].push_back(v);
    }
  }

  std::array<bool, kHoursPerWeek> known{};
  for (int h = 0; h < kHoursPerWeek; ++h) {
    auto& b = buckets[static_cast<std::size_t>(h)];
    if (b.empty()) {
      known[static_cast<std::size_t>(h)] = false;
      sig.interpolated_hours.push_back(h);
      continue;
    }
    known[static_cast<std::size_t>(h)] = true;
    sig.reference[static_cast<std::size_t>(h)] = median_of(b);
    sig.dispersion[static_cast<std::size_t>(h)] = scaled_mad(b);
  }
  sig_detail::interpolate_ring(sig.reference, known);
  sig_detail::interpolate_ring(sig.dispersion, known);
  return sig;
}

/// Fallback reference when only one complete week exists: the slot for hour
/// h is the median over the same hour-of-day on the other six days, so the
/// scored day never feeds its own reference. Assumes day-level periodicity.
inline ClusterSignature single_week_signature(const std::vector<std::vector<double>>& member_rows,
                                              int start_hour_of_week, int cluster, KpiKind kind) {
  if (member_rows.empty()) throw ValueError("single_week_signature: at least one cell required");
  for (const auto& row : member_rows)
    if (row.size() != static_cast<std::size_t>(kHoursPerWeek))
      throw ValueError("single_week_signature: rows must cover exactly one week");

  // Bucket samples by (hour-of-day, day-of-week).
  std::array<std::array<std::vector<double>, 7>, kHoursPerDay> buckets;
  for (int i = 0; i < kHoursPerWeek; ++i) {
    const int how = (start_hour_of_week + i) % kHoursPerWeek;
    const int hod = how % kHoursPerDay;
    const int day = how / kHoursPerDay;
    for (const auto& row : member_rows) {
      const double v = row[static_cast<std::size_t>(i)];
      if (!is_missing(v))
        buckets[static_cast<std::size_t>(hod)][static_cast<std::size_t>(day)].push_back(v);
    }
  }

  ClusterSignature sig;
  sig.cluster = cluster;
  sig.kind = kind;
  std::array<bool, kHoursPerWeek> known{};
  for (int h = 0; h < kHoursPerWeek; ++h) {
    const int hod = h % kHoursPerDay;
    const int day = h / kHoursPerDay;
    std::vector<double> pool;
    for (int d = 0; d < 7; ++d) {
      if (d == day) continue;
      const auto& b = buckets[static_cast<std::size_t>(hod)][static_cast<std::size_t>(d)];
      pool.insert(pool.end(), b.begin(), b.end());
    }
    if (pool.empty()) {
      known[static_cast<std::size_t>(h)] = false;
      sig.interpolated_hours.push_back(h);
      continue;
    }
    known[static_cast<std::size_t>(h)] = true;
    sig.reference[static_cast<std::size_t>(h)] = median_of(pool);
    sig.dispersion[static_cast<std::size_t>(h)] = scaled_mad(pool);
  }
  sig_detail::interpolate_ring(sig.reference, known);
  sig_detail::interpolate_ring(sig.dispersion, known);
  return sig;
}

/// One detected deviation window for a (cluster, KPI) pair. Hours are global
/// column indices into the scored matrix; end_hour is inclusive.
struct AnomalyEvent {
  int cluster = 0;
  KpiKind kind = KpiKind::HOSR;
  std::int64_t start_hour = 0;
  std::int64_t end_hour = 0;
  double peak_score = 0.0;  // +inf when dispersion was exactly zero at the peak
  int direction = 0;        // sign of the trend deviation at the peak
  bool zero_dispersion = false;
};

using AnomalyReport = std::vector<AnomalyEvent>;

/// Scores a window against its reference signature. The robust z-score of
/// the trend deviation must exceed `threshold` for at least `min_run`
/// consecutive hours to produce an event.
inline AnomalyReport detect_anomalies(const std::vector<double>& scored_series,
                                      int start_hour_of_week, std::int64_t global_offset,
                                      const ClusterSignature& signature, double threshold = 3.0,
                                      int min_run = 4) {
  if (threshold <= 0.0) throw ValueError("detect_anomalies: threshold must be > 0");
  if (min_run < 1) throw ValueError("detect_anomalies: min_run must be >= 1");
  const std::size_t n = scored_series.size();

  // Reference and dispersion rotated/tiled into the scored window's frame.
  std::vector<double> ref(n), disp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int h = (start_hour_of_week + static_cast<int>(i % kHoursPerWeek)) % kHoursPerWeek;
    ref[i] = signature.reference[static_cast<std::size_t>(h)];
    disp[i] = signature.dispersion[static_cast<std::size_t>(h)];
  }

  std::vector<double> trend_s, rem, trend_r;
  decompose(scored_series, trend_s, rem);
  decompose(ref, trend_r, rem);

  std::vector<double> score(n, 0.0);
  std::vector<double> deviation(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (is_missing(trend_s[i]) || is_missing(trend_r[i])) continue;
    deviation[i] = trend_s[i] - trend_r[i];
    score[i] = std::fabs(deviation[i]) / std::max(disp[i], kDispersionEpsilon);
  }

  AnomalyReport report;
  std::size_t i = 0;
  while (i < n) {
    if (!(score[i] > threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && score[j + 1] > threshold) ++j;
    const std::size_t run = j - i + 1;
    if (run >= static_cast<std::size_t>(min_run)) {
      AnomalyEvent ev;
      ev.cluster = signature.cluster;
      ev.kind = signature.kind;
      ev.start_hour = global_offset + static_cast<std::int64_t>(i);
      ev.end_hour = global_offset + static_cast<std::int64_t>(j);
      std::size_t peak = i;
      for (std::size_t t = i + 1; t <= j; ++t)
        if (score[t] > score[peak]) peak = t;
      ev.peak_score = score[peak];
      ev.direction = deviation[peak] >= 0.0 ? 1 : -1;
      if (disp[peak] == 0.0 && std::fabs(deviation[peak]) > 0.0) {
        ev.peak_score = std::numeric_limits<double>::infinity();
        ev.zero_dispersion = true;
      }
      report.push_back(ev);
    }
    i = j + 1;
  }
  return report;
}

/// Per-hour median across member cells; hours where every cell is missing
/// stay missing.
inline std::vector<double> median_series(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ValueError("median_series: no rows");
  const std::size_t n = rows[0].size();
  std::vector<double> out(n, missing_value());
  std::vector<double> bucket;
  for (std::size_t j = 0; j < n; ++j) {
    bucket.clear();
    for (const auto& row : rows)
      if (!is_missing(row[j])) bucket.push_back(row[j]);
    if (!bucket.empty()) out[j] = median_of(bucket);
  }
  return out;
}

/// Pearson correlation between the four cluster-median KPI series,
/// pairwise-complete over non-missing hours. Entries with fewer than three
/// shared samples or a zero-variance side are NaN; defined diagonal entries
/// are exactly 1.
inline std::array<std::array<double, kKpiCount>, kKpiCount> cluster_correlation(
    const std::array<std::vector<double>, kKpiCount>& kpi_series) {
  std::array<std::array<double, kKpiCount>, kKpiCount> out;
  for (int a = 0; a < kKpiCount; ++a) {
    for (int b = 0; b < kKpiCount; ++b) {
      std::vector<double> xs, ys;
      const auto& sa = kpi_series[static_cast<std::size_t>(a)];
      const auto& sb = kpi_series[static_cast<std::size_t>(b)];
      const std::size_t n = std::min(sa.size(), sb.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (is_missing(sa[i]) || is_missing(sb[i])) continue;
        xs.push_back(sa[i]);
        ys.push_back(sb[i]);
      }
      if (a == b) {
        double var = 0.0;
        const double m = mean_of(xs);
        for (double v : xs) var += (v - m) * (v - m);
        const double tol = 1e-24 * static_cast<double>(xs.size()) * std::max(1.0, m * m);
        out[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
            (xs.size() >= 3 && var > tol) ? 1.0 : missing_value();
      } else {
        out[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = pearson(xs, ys);
      }
    }
  }
  return out;
}

}  // namespace kpisentinel
