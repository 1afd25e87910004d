#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kpisentinel/rng.hpp"
#include "kpisentinel/tree.hpp"
#include "kpisentinel/util.hpp"

namespace kpisentinel {

struct AdaBoostParams {
  int n_estimators = 10;
  double learning_rate = 1.0;
  int max_depth = 3;
  int min_rows = 10;  // E_min: smallest training set worth fitting
};

struct BoostStage {
  RegressionTree tree;
  double alpha = 0.0;  // learning_rate * ln(1/beta), always > 0 for retained stages

  bool operator==(const BoostStage&) const = default;
};

struct AdaBoostModel {
  std::vector<BoostStage> stages;

  bool operator==(const AdaBoostModel&) const = default;
};

/// Optional per-stage trace used by invariant tests. Weights are listed in
/// active-row order.
struct AdaBoostDiagnostics {
  std::vector<std::vector<double>> weights_after_stage;
  std::vector<double> average_loss;
  std::vector<double> beta;
};

/// AdaBoost.R2 with linear loss over an active subset of presorted rows.
/// Each stage fits a tree on a weighted bootstrap resample, scores absolute
/// errors on every active row scaled by the worst one, and reweights rows by
/// beta^(lr * (1 - loss)). A stage whose average loss reaches 0.5 is dropped
/// and boosting stops (a failing FIRST stage is kept with a vanishing weight
/// so the model stays usable); a perfect stage (max error 0) is kept with
/// beta = 1e-10 and stops the loop.
inline AdaBoostModel adaboost_fit_active(const TreePresort& presort,
                                         std::span<const double> targets,
                                         std::span<const std::size_t> active,
                                         const AdaBoostParams& params, std::uint64_t seed,
                                         AdaBoostDiagnostics* diagnostics = nullptr,
                                         TreeFitter* fitter = nullptr) {
  const auto rows = presort.rows();
  const std::size_t total = rows.size();
  const std::size_t m = active.size();
  if (m == 0) throw ValueError("adaboost_fit: empty training set");
  if (targets.size() != total) throw ValueError("adaboost_fit: rows/targets length mismatch");
  if (m < static_cast<std::size_t>(params.min_rows))
    throw ValueError("adaboost_fit: need at least " + std::to_string(params.min_rows) +
                     " rows, got " + std::to_string(m));
  if (params.n_estimators < 1) throw ValueError("adaboost_fit: n_estimators must be >= 1");
  if (params.learning_rate <= 0.0) throw ValueError("adaboost_fit: learning_rate must be > 0");
  for (std::size_t i : active)
    if (i >= total) throw ValueError("adaboost_fit: active row index out of range");

  // A caller-provided fitter must have been built over the same presort with
  // the same depth; it exists to recycle scratch buffers across many fits.
  std::optional<TreeFitter> local_fitter;
  if (!fitter) {
    local_fitter.emplace(presort, params.max_depth);
    fitter = &*local_fitter;
  }

  Rng rng(derive_seed(seed, 0x61646162ULL));

  // Restrict the per-feature orderings to the active rows once per fit; each
  // stage further drops the rows its bootstrap left out via zero weights.
  std::vector<char> is_active(total, 0);
  for (std::size_t i : active) is_active[i] = 1;
  const auto& active_orders =
      fitter->filter_orders(std::span<const char>(is_active.data(), total));

  std::vector<double> weights(m, 1.0 / static_cast<double>(m));
  std::vector<double> cumulative(m), errors(m);
  std::vector<double> multiplicity(total, 0.0);
  AdaBoostModel model;

  for (int stage = 0; stage < params.n_estimators; ++stage) {
    // Deterministic weighted bootstrap: m categorical draws over the active
    // rows become per-row multiplicities, which is what the tree sees as
    // weights.
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      acc += weights[i];
      cumulative[i] = acc;
    }
    std::fill(multiplicity.begin(), multiplicity.end(), 0.0);
    for (std::size_t d = 0; d < m; ++d) {
      const double r = rng.uniform01() * acc;
      const std::size_t pick = static_cast<std::size_t>(
          std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
      multiplicity[active[std::min(pick, m - 1)]] += 1.0;
    }

    BoostStage st;
    st.tree =
        fitter->fit_over(active_orders, targets, std::span<const double>(multiplicity.data(), total));

    double max_error = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      errors[i] = std::fabs(st.tree.predict(rows[active[i]]) - targets[active[i]]);
      max_error = std::max(max_error, errors[i]);
    }

    if (max_error == 0.0) {
      const double beta = 1e-10;
      st.alpha = params.learning_rate * std::log(1.0 / beta);
      model.stages.push_back(std::move(st));
      if (diagnostics) {
        diagnostics->average_loss.push_back(0.0);
        diagnostics->beta.push_back(beta);
        diagnostics->weights_after_stage.push_back(weights);
      }
      break;
    }

    double avg_loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) avg_loss += weights[i] * (errors[i] / max_error);

    if (avg_loss >= 0.5) {
      // A failing first stage is kept with a vanishing weight so the model
      // stays usable (the weighted median of one stage is its prediction);
      // afterwards the gate discards and stops as usual.
      if (model.stages.empty()) {
        st.alpha = params.learning_rate * 1e-6;
        model.stages.push_back(std::move(st));
        if (diagnostics) {
          diagnostics->average_loss.push_back(avg_loss);
          diagnostics->beta.push_back(1.0);
          diagnostics->weights_after_stage.push_back(weights);
        }
      }
      break;
    }

    const double beta = avg_loss / (1.0 - avg_loss);
    st.alpha = params.learning_rate * std::log(1.0 / beta);
    model.stages.push_back(std::move(st));

    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      weights[i] *= std::pow(beta, params.learning_rate * (1.0 - errors[i] / max_error));
      sum += weights[i];
    }
    for (auto& w : weights) w /= sum;

    if (diagnostics) {
      diagnostics->average_loss.push_back(avg_loss);
      diagnostics->beta.push_back(beta);
      diagnostics->weights_after_stage.push_back(weights);
    }
  }

  return model;
}

inline AdaBoostModel adaboost_fit(const std::vector<std::vector<double>>& rows,
                                  const std::vector<double>& targets,
                                  const AdaBoostParams& params, std::uint64_t seed,
                                  AdaBoostDiagnostics* diagnostics = nullptr) {
  TreePresort presort(std::span<const std::vector<double>>(rows.data(), rows.size()));
  std::vector<std::size_t> active(rows.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
  return adaboost_fit_active(presort, std::span<const double>(targets.data(), targets.size()),
                             active, params, seed, diagnostics);
}

/// Weighted median of the stage predictions: sort ascending and return the
/// first prediction whose cumulative stage weight reaches half the total.
inline double adaboost_predict(const AdaBoostModel& model, const std::vector<double>& features) {
  if (model.stages.empty()) throw ValueError("adaboost_predict: model has no stages");
  std::vector<std::pair<double, double>> preds;  // (prediction, alpha)
  preds.reserve(model.stages.size());
  double total = 0.0;
  for (const auto& st : model.stages) {
    preds.push_back({st.tree.predict(features), st.alpha});
    total += st.alpha;
  }
  std::stable_sort(preds.begin(), preds.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double acc = 0.0;
  for (const auto& [pred, alpha] : preds) {
    acc += alpha;
    if (acc >= 0.5 * total) return pred;
  }
  return preds.back().first;
}

}  // namespace kpisentinel
