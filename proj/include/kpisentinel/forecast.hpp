#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kpisentinel/adaboost.hpp"
#include "kpisentinel/features.hpp"
#include "kpisentinel/util.hpp"

namespace kpisentinel {

struct ForecastConfig {
  FeatureConfig features;  // W and m_T
  AdaBoostParams boost;    // estimators, learning rate, depth, E_min
  int refit_every = 1;     // 1 refits at every step, k reuses a model k-1 times
};

/// Supervised rows for one series: features of the window ending at t-1
/// paired with the value at t. Rows touching non-finite samples are dropped.
struct TrainingSet {
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  std::vector<int> target_indices;  // strictly increasing positions into the series
  int window_length = 0;
};

inline TrainingSet build_training_set(const std::vector<double>& series,
                                      const FeatureConfig& config) {
  const int w = config.window_length;
  if (static_cast<int>(series.size()) < w + 1)
    throw ValueError("build_training_set: series length must be at least W + 1");
  TrainingSet set;
  set.window_length = w;
  std::vector<double> window(static_cast<std::size_t>(w));
  for (std::size_t j = 0; j + static_cast<std::size_t>(w) < series.size(); ++j) {
    const std::size_t target_index = j + static_cast<std::size_t>(w);
    bool finite = std::isfinite(series[target_index]);
    for (std::size_t i = 0; finite && i < static_cast<std::size_t>(w); ++i)
      finite = std::isfinite(series[j + i]);
    if (!finite) continue;
    window.assign(series.begin() + static_cast<std::ptrdiff_t>(j),
                  series.begin() + static_cast<std::ptrdiff_t>(target_index));
    set.rows.push_back(extract_features(window, config));
    set.targets.push_back(series[target_index]);
    set.target_indices.push_back(static_cast<int>(target_index));
  }
  return set;
}

/// One walk-forward step's outcome.
struct ForecastPoint {
  int target_index = 0;
  double y_true = 0.0;
  double y_model = 0.0;
  double y_baseline = 0.0;  // the last value before the prediction
};

/// Mean absolute error between two equal-length series.
inline double mae(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValueError("mae: length mismatch");
  if (a.empty()) throw ValueError("mae: empty series");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// One-step-ahead walk-forward evaluation of a single series. For each
/// target index t the model is fitted on rows whose target lies strictly
/// before t, so no step ever reads data at or after its own target. The
/// per-step RNG stream is derived from (seed, t) alone, keeping predictions
/// for early targets untouched by anything that happens later.
inline std::vector<ForecastPoint> walk_forward(const std::vector<double>& series,
                                               const ForecastConfig& config,
                                               std::uint64_t seed) {
  const int w = config.features.window_length;
  const int e_min = config.boost.min_rows;
  if (config.refit_every < 1) throw ValueError("walk_forward: refit_every must be >= 1");
  if (static_cast<int>(series.size()) < w + e_min + 1)
    throw ValueError("walk_forward: series length must be at least W + E_min + 1");

  const TrainingSet full = build_training_set(series, config.features);
  std::vector<ForecastPoint> points;

  TreePresort presort(std::span<const std::vector<double>>(full.rows.data(), full.rows.size()));
  TreeFitter fitter(presort, config.boost.max_depth);
  const std::span<const double> targets(full.targets.data(), full.targets.size());
  std::vector<std::size_t> all_indices(full.rows.size());
  for (std::size_t i = 0; i < all_indices.size(); ++i) all_indices[i] = i;

  AdaBoostModel model;
  bool have_model = false;
  int steps_since_fit = 0;
  std::size_t next_row = 0;  // rows with target_indices < t form the prefix [0, next_row)
  std::vector<double> window(static_cast<std::size_t>(w));

  for (int t = w + e_min; t < static_cast<int>(series.size()); ++t) {
    while (next_row < full.target_indices.size() && full.target_indices[next_row] < t)
      ++next_row;
    if (next_row < static_cast<std::size_t>(e_min)) continue;
    if (!std::isfinite(series[static_cast<std::size_t>(t - 1)])) continue;

    // Features for target t come from the cached row when one exists; a
    // non-finite value at t itself only prevents training on that row, not
    // predicting it.
    const std::vector<double>* feat = nullptr;
    std::vector<double> ad_hoc;
    if (next_row < full.target_indices.size() && full.target_indices[next_row] == t) {
      feat = &full.rows[next_row];
    } else {
      bool finite = true;
      for (int i = t - w; finite && i < t; ++i)
        finite = std::isfinite(series[static_cast<std::size_t>(i)]);
      if (!finite) continue;
      window.assign(series.begin() + (t - w), series.begin() + t);
      ad_hoc = extract_features(window, config.features);
      feat = &ad_hoc;
    }

    if (!have_model || steps_since_fit >= config.refit_every) {
      model = adaboost_fit_active(
          presort, targets, std::span<const std::size_t>(all_indices.data(), next_row),
          config.boost, derive_seed(seed, static_cast<std::uint64_t>(t)), nullptr, &fitter);
      have_model = true;
      steps_since_fit = 0;
    }

    ForecastPoint p;
    p.target_index = t;
    p.y_true = series[static_cast<std::size_t>(t)];
    p.y_model = adaboost_predict(model, *feat);
    p.y_baseline = series[static_cast<std::size_t>(t - 1)];
    points.push_back(p);
    ++steps_since_fit;
  }
  return points;
}

/// Pooled variant: one model per step fitted on the union of all member
/// series' admissible rows, then applied to each member. Members are pooled
/// in the order given; per-step seeding matches walk_forward.
inline std::vector<std::vector<ForecastPoint>> walk_forward_pooled(
    const std::vector<std::vector<double>>& member_series, const ForecastConfig& config,
    std::uint64_t seed) {
  const int w = config.features.window_length;
  const int e_min = config.boost.min_rows;
  if (member_series.empty()) throw ValueError("walk_forward_pooled: no series");
  if (config.refit_every < 1) throw ValueError("walk_forward_pooled: refit_every must be >= 1");

  std::size_t len = 0;
  for (const auto& s : member_series) len = std::max(len, s.size());
  if (static_cast<int>(len) < w + e_min + 1)
    throw ValueError("walk_forward_pooled: series length must be at least W + E_min + 1");

  std::vector<TrainingSet> sets;
  sets.reserve(member_series.size());
  for (const auto& s : member_series) sets.push_back(build_training_set(s, config.features));

  // One pooled row store and presort; steps differ only in the active set.
  std::vector<std::vector<double>> pooled_rows;
  std::vector<double> pooled_targets;
  std::vector<std::size_t> member_offset(sets.size(), 0);
  for (std::size_t m = 0; m < sets.size(); ++m) {
    member_offset[m] = pooled_rows.size();
    pooled_rows.insert(pooled_rows.end(), sets[m].rows.begin(), sets[m].rows.end());
    pooled_targets.insert(pooled_targets.end(), sets[m].targets.begin(), sets[m].targets.end());
  }
  TreePresort presort(
      std::span<const std::vector<double>>(pooled_rows.data(), pooled_rows.size()));
  TreeFitter fitter(presort, config.boost.max_depth);
  const std::span<const double> targets(pooled_targets.data(), pooled_targets.size());

  std::vector<std::vector<ForecastPoint>> out(member_series.size());
  std::vector<std::size_t> next_row(member_series.size(), 0);
  std::vector<std::size_t> active;
  active.reserve(pooled_rows.size());

  AdaBoostModel model;
  bool have_model = false;
  int steps_since_fit = 0;

  for (int t = w + e_min; t < static_cast<int>(len); ++t) {
    std::size_t available = 0;
    for (std::size_t m = 0; m < sets.size(); ++m) {
      auto& nr = next_row[m];
      while (nr < sets[m].target_indices.size() && sets[m].target_indices[nr] < t) ++nr;
      available += nr;
    }
    if (available < static_cast<std::size_t>(e_min)) continue;

    bool any_member = false;
    for (std::size_t m = 0; m < sets.size(); ++m) {
      const auto& set = sets[m];
      const std::size_t nr = next_row[m];
      if (nr < set.target_indices.size() && set.target_indices[nr] == t &&
          std::isfinite(member_series[m][static_cast<std::size_t>(t - 1)])) {
        any_member = true;
        break;
      }
    }
    if (!any_member) continue;

    if (!have_model || steps_since_fit >= config.refit_every) {
      active.clear();
      for (std::size_t m = 0; m < sets.size(); ++m)
        for (std::size_t r = 0; r < next_row[m]; ++r) active.push_back(member_offset[m] + r);
      model = adaboost_fit_active(presort, targets, active, config.boost,
                                  derive_seed(seed, static_cast<std::uint64_t>(t)), nullptr,
                                  &fitter);
      have_model = true;
      steps_since_fit = 0;
    }

    for (std::size_t m = 0; m < sets.size(); ++m) {
      const auto& set = sets[m];
      const std::size_t nr = next_row[m];
      if (nr >= set.target_indices.size() || set.target_indices[nr] != t) continue;
      if (!std::isfinite(member_series[m][static_cast<std::size_t>(t - 1)])) continue;
      ForecastPoint p;
      p.target_index = t;
      p.y_true = member_series[m][static_cast<std::size_t>(t)];
      p.y_model = adaboost_predict(model, set.rows[nr]);
      p.y_baseline = member_series[m][static_cast<std::size_t>(t - 1)];
      out[m].push_back(p);
    }
    ++steps_since_fit;
  }
  return out;
}

/// Aggregate MAE triplet over a set of walk-forward points.
struct MaeTriplet {
  double model_vs_true = 0.0;
  double baseline_vs_true = 0.0;
  double model_vs_baseline = 0.0;
  std::size_t points = 0;
};

inline MaeTriplet evaluate_points(const std::vector<ForecastPoint>& points) {
  MaeTriplet m;
  m.points = points.size();
  if (points.empty()) return m;
  for (const auto& p : points) {
    m.model_vs_true += std::fabs(p.y_model - p.y_true);
    m.baseline_vs_true += std::fabs(p.y_baseline - p.y_true);
    m.model_vs_baseline += std::fabs(p.y_model - p.y_baseline);
  }
  const double n = static_cast<double>(points.size());
  m.model_vs_true /= n;
  m.baseline_vs_true /= n;
  m.model_vs_baseline /= n;
  return m;
}

}  // namespace kpisentinel
