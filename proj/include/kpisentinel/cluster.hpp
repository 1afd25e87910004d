#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kpisentinel/csv.hpp"
#include "kpisentinel/geo.hpp"
#include "kpisentinel/ingest.hpp"
#include "kpisentinel/rng.hpp"

namespace kpisentinel {

constexpr double kFallbackRadiusKm = 5.0;

/// Estimated geometry of one cell: expected size and ambient user speed.
struct CellGeometry {
  std::string cell_id;
  double latitude = 0.0;
  double longitude = 0.0;
  double radius_km = 0.0;
  double mean_speed_kmh = 0.0;
  int waypoint_count = 0;
  bool radius_fallback = false;  // no resolvable neighbor, default radius applied
  bool speed_fallback = false;   // no waypoint in radius, speed 0 applied
};

struct ClusterSummary {
  int cell_count = 0;
  double mean_speed_kmh = 0.0;
  double min_lat = 0.0, max_lat = 0.0;
  double min_lon = 0.0, max_lon = 0.0;
};

struct ClusterPartition {
  int k = 0;
  std::map<std::string, int> assignments;            // cell_id -> cluster in [0, k)
  std::vector<std::array<double, 3>> centroids;      // standardized (x_km, y_km, speed)
  std::vector<ClusterSummary> summaries;
  std::vector<double> sse_history;                   // objective after each Lloyd update
};

/// Expected cell size: 90th percentile (linear-interpolation quantile) of
/// great-circle distances to resolvable neighbors. Cells without any
/// resolvable neighbor get a flagged 5 km fallback.
inline double estimate_cell_size(const CellInfo& cell,
                                 const std::unordered_map<std::string, const CellInfo*>& by_id,
                                 bool* used_fallback = nullptr) {
  std::vector<double> dist;
  dist.reserve(cell.neighbor_ids.size());
  for (const auto& id : cell.neighbor_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) continue;  // dangling neighbor reference
    dist.push_back(haversine(cell.latitude, cell.longitude, it->second->latitude,
                             it->second->longitude));
  }
  if (dist.empty()) {
    if (used_fallback) *used_fallback = true;
    return kFallbackRadiusKm;
  }
  if (used_fallback) *used_fallback = false;
  std::sort(dist.begin(), dist.end());
  return quantile_sorted(dist, 0.9);
}

/// Mean posted speed over the waypoints within the cell radius; 0 with a
/// flag when nothing falls inside.
inline double estimate_cell_speed(double lat, double lon, double radius_km,
                                  const std::vector<SpeedWaypoint>& waypoints,
                                  int* count_out = nullptr) {
  double sum = 0.0;
  int count = 0;
  for (const auto& w : waypoints) {
    if (haversine(lat, lon, w.latitude, w.longitude) <= radius_km) {
      sum += w.speed_kmh;
      ++count;
    }
  }
  if (count_out) *count_out = count;
  return count == 0 ? 0.0 : sum / count;
}

/// Computes geometry for every cell.
inline std::vector<CellGeometry> estimate_geometries(const std::vector<CellInfo>& cells,
                                                     const std::vector<SpeedWaypoint>& waypoints) {
  std::unordered_map<std::string, const CellInfo*> by_id;
  by_id.reserve(cells.size());
  for (const auto& c : cells) by_id[c.cell_id] = &c;
  std::vector<CellGeometry> out;
  out.reserve(cells.size());
  for (const auto& c : cells) {
    CellGeometry g;
    g.cell_id = c.cell_id;
    g.latitude = c.latitude;
    g.longitude = c.longitude;
    g.radius_km = estimate_cell_size(c, by_id, &g.radius_fallback);
    g.mean_speed_kmh =
        estimate_cell_speed(c.latitude, c.longitude, g.radius_km, waypoints, &g.waypoint_count);
    g.speed_fallback = g.waypoint_count == 0;
    out.push_back(std::move(g));
  }
  return out;
}

namespace cluster_detail {

struct Point {
  std::array<double, 3> v;  // standardized x_km, y_km, speed
  std::size_t geom_index;
};

inline double sq_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace cluster_detail

namespace cluster_detail {

struct LloydRun {
  std::vector<int> assign;
  std::vector<std::array<double, 3>> centroids;
  std::vector<double> sse_history;

  double final_sse() const { return sse_history.back(); }
};

/// One seeded k-means++ / Lloyd run over standardized points.
inline LloydRun lloyd_once(const std::vector<Point>& pts, int k, std::uint64_t run_seed,
                           int max_iterations) {
  const std::size_t n = pts.size();
  Rng rng(run_seed);
  std::vector<std::array<double, 3>> centroids;
  centroids.reserve(static_cast<std::size_t>(k));
  centroids.push_back(pts[rng.bounded(n)].v);
  std::vector<double> d2(n);
  while (centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = sq_dist(pts[i].v, centroids[0]);
      for (std::size_t c = 1; c < centroids.size(); ++c)
        best = std::min(best, sq_dist(pts[i].v, centroids[c]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All remaining mass sits on existing centroids; any point works.
      centroids.push_back(pts[rng.bounded(n)].v);
      continue;
    }
    double r = rng.uniform01() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(pts[pick].v);
  }

  LloydRun run;
  std::vector<int>& assign = run.assign;
  assign.assign(n, -1);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(pts[i].v, centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(pts[i].v, centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {  // strict: ties keep the lowest index
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }

    // Re-seed any emptied cluster from the farthest point, deterministically.
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) ++count[static_cast<std::size_t>(assign[i])];
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[static_cast<std::size_t>(assign[i])] <= 1) continue;
        const double d = sq_dist(pts[i].v, centroids[static_cast<std::size_t>(assign[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --count[static_cast<std::size_t>(assign[far])];
      assign[far] = c;
      count[static_cast<std::size_t>(c)] = 1;
      centroids[static_cast<std::size_t>(c)] = pts[far].v;
      changed = true;
    }

    // Centroid update in fixed point order.
    std::vector<std::array<double, 3>> sums(static_cast<std::size_t>(k), {0.0, 0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c)
        sums[static_cast<std::size_t>(assign[i])][c] += pts[i].v[c];
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < 3; ++d)
        centroids[static_cast<std::size_t>(c)][d] =
            sums[static_cast<std::size_t>(c)][d] /
            static_cast<double>(count[static_cast<std::size_t>(c)]);

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      sse += sq_dist(pts[i].v, centroids[static_cast<std::size_t>(assign[i])]);
    run.sse_history.push_back(sse);

    if (!changed) break;
  }
  run.centroids = std::move(centroids);
  return run;
}

}  // namespace cluster_detail

/// Lloyd k-means over standardized (x_km, y_km, mean_speed) features with
/// k-means++ seeding and deterministic multi-restart (lowest final SSE wins,
/// first such run on ties). Cells are processed in cell_id order, which makes
/// the result invariant to the input permutation.
inline ClusterPartition cluster_cells(const std::vector<CellGeometry>& geoms, int k,
                                      std::uint64_t seed, int max_iterations = 100,
                                      int restarts = 10) {
  using cluster_detail::Point;
  using cluster_detail::sq_dist;

  const std::size_t n = geoms.size();
  if (k < 1) throw ValueError("cluster_cells: K must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    throw ValueError("cluster_cells: K (" + std::to_string(k) + ") exceeds the number of cells (" +
                     std::to_string(n) + ")");
  if (restarts < 1) throw ValueError("cluster_cells: restarts must be >= 1");

  // Canonical order: by cell_id, independent of caller ordering.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return geoms[a].cell_id < geoms[b].cell_id;
  });

  // Project about the dataset centroid, then z-score each coordinate.
  double lat0 = 0.0, lon0 = 0.0;
  for (const auto& g : geoms) {
    lat0 += g.latitude;
    lon0 += g.longitude;
  }
  lat0 /= static_cast<double>(n);
  lon0 /= static_cast<double>(n);
  LocalProjection proj(lat0, lon0);

  std::vector<Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = geoms[order[i]];
    double x, y;
    proj.to_km(g.latitude, g.longitude, x, y);
    pts[i] = {{x, y, g.mean_speed_kmh}, order[i]};
  }
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (const auto& p : pts) mean += p.v[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& p : pts) var += (p.v[c] - mean) * (p.v[c] - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    for (auto& p : pts) p.v[c] = sd > 0.0 ? (p.v[c] - mean) / sd : 0.0;
  }

  cluster_detail::LloydRun best;
  for (int r = 0; r < restarts; ++r) {
    auto run = cluster_detail::lloyd_once(
        pts, k, derive_seed(seed, 0x6b6d65616e73ULL + static_cast<std::uint64_t>(r)),
        max_iterations);
    if (best.sse_history.empty() || run.final_sse() < best.final_sse()) best = std::move(run);
  }

  ClusterPartition part;
  part.k = k;
  part.sse_history = best.sse_history;
  const std::vector<int>& assign = best.assign;
  part.centroids = best.centroids;
  part.summaries.assign(static_cast<std::size_t>(k), ClusterSummary{});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = geoms[pts[i].geom_index];
    auto& s = part.summaries[static_cast<std::size_t>(assign[i])];
    if (s.cell_count == 0) {
      s.min_lat = s.max_lat = g.latitude;
      s.min_lon = s.max_lon = g.longitude;
    } else {
      s.min_lat = std::min(s.min_lat, g.latitude);
      s.max_lat = std::max(s.max_lat, g.latitude);
      s.min_lon = std::min(s.min_lon, g.longitude);
      s.max_lon = std::max(s.max_lon, g.longitude);
    }
    ++s.cell_count;
    s.mean_speed_kmh += g.mean_speed_kmh;
    part.assignments[g.cell_id] = assign[i];
  }
  for (auto& s : part.summaries)
    if (s.cell_count > 0) s.mean_speed_kmh /= static_cast<double>(s.cell_count);

  return part;
}

/// Within-cluster SSE of an arbitrary partition in the standardized feature
/// space cluster_cells uses; exposed for oracle comparisons.
inline double partition_sse(const std::vector<CellGeometry>& geoms,
                            const std::vector<int>& labels, int k) {
  const std::size_t n = geoms.size();
  double lat0 = 0.0, lon0 = 0.0;
  for (const auto& g : geoms) {
    lat0 += g.latitude;
    lon0 += g.longitude;
  }
  lat0 /= static_cast<double>(n);
  lon0 /= static_cast<double>(n);
  LocalProjection proj(lat0, lon0);
  std::vector<std::array<double, 3>> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    proj.to_km(geoms[i].latitude, geoms[i].longitude, v[i][0], v[i][1]);
    v[i][2] = geoms[i].mean_speed_kmh;
  }
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (const auto& p : v) mean += p[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& p : v) var += (p[c] - mean) * (p[c] - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    for (auto& p : v) p[c] = sd > 0.0 ? (p[c] - mean) / sd : 0.0;
  }
  std::vector<std::array<double, 3>> mean(static_cast<std::size_t>(k), {0.0, 0.0, 0.0});
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) mean[static_cast<std::size_t>(labels[i])][c] += v[i][c];
    ++count[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < k; ++c)
    if (count[static_cast<std::size_t>(c)] > 0)
      for (int d = 0; d < 3; ++d)
        mean[static_cast<std::size_t>(c)][d] /= static_cast<double>(count[static_cast<std::size_t>(c)]);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sse += cluster_detail::sq_dist(v[i], mean[static_cast<std::size_t>(labels[i])]);
  return sse;
}

inline const std::vector<std::string>& clusters_header() {
  static const std::vector<std::string> h = {"cell_id", "cluster", "mean_speed_kmh", "radius_km"};
  return h;
}

inline void write_clusters(const std::string& path, const std::vector<CellGeometry>& geoms,
                           const ClusterPartition& part) {
  CsvWriter out(path, clusters_header());
  std::vector<const CellGeometry*> sorted;
  sorted.reserve(geoms.size());
  for (const auto& g : geoms) sorted.push_back(&g);
  std::sort(sorted.begin(), sorted.end(),
            [](const CellGeometry* a, const CellGeometry* b) { return a->cell_id < b->cell_id; });
  for (const auto* g : sorted)
    out.write_row({g->cell_id, std::to_string(part.assignments.at(g->cell_id)),
                   format_double(g->mean_speed_kmh), format_double(g->radius_km)});
}

struct ClusterRow {
  std::string cell_id;
  int cluster = 0;
  double mean_speed_kmh = 0.0;
  double radius_km = 0.0;
};

inline std::vector<ClusterRow> parse_clusters(const std::string& path) {
  CsvReader reader(path, clusters_header());
  std::vector<ClusterRow> rows;
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<std::string> row;
  while (reader.next(row)) {
    ClusterRow r;
    r.cell_id = row[0];
    r.cluster = static_cast<int>(parse_int(row[1], path, reader.line(), 2));
    if (r.cluster < 0)
      throw ParseError(path + ": line " + std::to_string(reader.line()) +
                       ": cluster index must be >= 0");
    r.mean_speed_kmh = parse_double(row[2], path, reader.line(), 3);
    r.radius_km = parse_double(row[3], path, reader.line(), 4);
    if (seen.count(r.cell_id))
      throw ParseError(path + ": duplicate cell_id '" + r.cell_id + "' at line " +
                       std::to_string(reader.line()));
    seen[r.cell_id] = rows.size();
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace kpisentinel
