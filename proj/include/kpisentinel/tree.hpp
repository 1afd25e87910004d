#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "kpisentinel/util.hpp"

namespace kpisentinel {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;  // leaf prediction (weighted mean of its rows)
  int left = -1;
  int right = -1;

  bool operator==(const TreeNode&) const = default;
};

/// Binary regression tree; rows with feature <= threshold go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const std::vector<double>& features) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(i)];
      i = features[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  bool operator==(const RegressionTree&) const = default;
};

/// Per-feature row orderings, shared across repeated fits on the same rows
/// (boosting stages differ only in weights, walk-forward steps only in which
/// prefix of the rows is active).
class TreePresort {
 public:
  explicit TreePresort(std::span<const std::vector<double>> rows) : rows_(rows) {
    const std::size_t n = rows.size();
    const std::size_t f = n == 0 ? 0 : rows[0].size();
    sorted_.resize(f);
    columns_.resize(f * n);
    for (std::size_t c = 0; c < f; ++c) {
      for (std::size_t i = 0; i < n; ++i) columns_[c * n + i] = rows[i][c];
      auto& idx = sorted_[c];
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
      const double* col = columns_.data() + c * n;
      std::stable_sort(idx.begin(), idx.end(),
                       [col](int a, int b) { return col[a] < col[b]; });
    }
  }

  TreePresort(const TreePresort&) = delete;
  TreePresort& operator=(const TreePresort&) = delete;

  std::span<const std::vector<double>> rows() const { return rows_; }
  std::size_t features() const { return sorted_.size(); }
  const std::vector<int>& order(std::size_t feature) const { return sorted_[feature]; }

  /// Feature values in column-major layout for cache-friendly split scans.
  const double* column(std::size_t feature) const {
    return columns_.data() + feature * rows_.size();
  }

 private:
  std::span<const std::vector<double>> rows_;
  std::vector<std::vector<int>> sorted_;
  std::vector<double> columns_;
};

namespace tree_detail {

/// Weighted target statistics accumulated about an anchor value, so a node
/// of identical targets has an exactly zero SSE and an exact mean.
struct NodeStats {
  double anchor = 0.0;
  double w = 0.0;
  double wd = 0.0;   // sum of w * (y - anchor)
  double wd2 = 0.0;  // sum of w * (y - anchor)^2

  void add(double weight, double y) {
    const double d = y - anchor;
    w += weight;
    wd += weight * d;
    wd2 += weight * d * d;
  }

  double sse() const { return w > 0.0 ? std::max(0.0, wd2 - wd * wd / w) : 0.0; }
  double mean() const { return w > 0.0 ? anchor + wd / w : 0.0; }
};

/// Greedy builder over per-feature sorted row lists. Children inherit their
/// parents' orderings by stable partition. Scratch buffers are reusable
/// across fits on the same presorted rows (only targets/weights change), so
/// repeated fitting allocates nothing in steady state.
class Builder {
 public:
  Builder(const TreePresort& presort, int max_depth)
      : presort_(&presort),
        rows_(presort.rows()),
        n_features_(presort.features()),
        max_depth_(max_depth) {
    levels_.resize(static_cast<std::size_t>(max_depth) + 1);
    for (auto& level : levels_) {
      level.left.resize(n_features_);
      level.right.resize(n_features_);
    }
    root_.resize(n_features_);
  }

  RegressionTree fit(std::span<const double> targets, std::span<const double> weights) {
    return fit_over(presorted_orders(), targets, weights);
  }

  /// Fit restricted to pre-filtered per-feature orderings (e.g. the active
  /// rows of a walk-forward step); rows with zero weight are still skipped.
  RegressionTree fit_over(const std::vector<std::vector<int>>& base,
                          std::span<const double> targets, std::span<const double> weights) {
    targets_ = targets;
    weights_ = weights;
    for (std::size_t f = 0; f < n_features_; ++f) {
      auto& ord = root_[f];
      ord.clear();
      for (int ri : base[f])
        if (weights_[static_cast<std::size_t>(ri)] > 0.0) ord.push_back(ri);
    }
    RegressionTree tree;
    tree.nodes.push_back(TreeNode{});
    grow(tree, 0, 0, root_);
    return tree;
  }

  const std::vector<std::vector<int>>& presorted_orders() {
    if (full_orders_.empty()) {
      full_orders_.resize(n_features_);
      for (std::size_t f = 0; f < n_features_; ++f) full_orders_[f] = presort_->order(f);
    }
    return full_orders_;
  }

  /// Per-feature orderings restricted to flagged rows; buffer owned by the
  /// fitter and reused, so repeated calls do not allocate.
  const std::vector<std::vector<int>>& filter_orders(std::span<const char> keep) {
    if (filtered_orders_.empty()) filtered_orders_.resize(n_features_);
    for (std::size_t f = 0; f < n_features_; ++f) {
      auto& ord = filtered_orders_[f];
      ord.clear();
      for (int ri : presort_->order(f))
        if (keep[static_cast<std::size_t>(ri)]) ord.push_back(ri);
    }
    return filtered_orders_;
  }

 private:
  struct Scratch {
    std::vector<std::vector<int>> left;
    std::vector<std::vector<int>> right;
  };

  void grow(RegressionTree& tree, int node_index, int depth,
            const std::vector<std::vector<int>>& order) {
    const auto& rows_in_node = order.empty() ? kEmpty : order[0];
    NodeStats stats;
    if (!rows_in_node.empty()) {
      stats.anchor = targets_[static_cast<std::size_t>(rows_in_node[0])];
      for (int ri : rows_in_node) {
        const std::size_t i = static_cast<std::size_t>(ri);
        stats.add(weights_[i], targets_[i]);
      }
    }
    tree.nodes[static_cast<std::size_t>(node_index)].value = stats.mean();
    tree.nodes[static_cast<std::size_t>(node_index)].feature = -1;
    if (depth >= max_depth_) return;

    if (!(stats.sse() > 0.0)) return;  // already pure

    // Minimizing SSE_left + SSE_right is maximizing the anchored gain
    // wd_L^2/w_L + wd_R^2/w_R; a single divide per candidate keeps the scan
    // cheap. The no-split baseline is wd^2/W, so only strictly improving
    // splits qualify; strict comparison resolves ties to the lowest feature
    // index, then the lowest threshold.
    const double total_w = stats.w;
    const double total_wd = stats.wd;
    double best_gain = total_wd * total_wd / total_w;
    int best_feature = -1;
    double best_threshold = 0.0;

    for (std::size_t f = 0; f < n_features_; ++f) {
      const double* col = presort_->column(f);
      double left_w = 0.0, left_wd = 0.0;
      double prev_value = 0.0;
      bool have_prev = false;
      for (int ri : order[f]) {
        const std::size_t i = static_cast<std::size_t>(ri);
        const double value = col[i];
        if (have_prev && value > prev_value) {
          const double threshold = 0.5 * (prev_value + value);
          if (threshold > prev_value && threshold < value) {
            const double right_w = total_w - left_w;
            const double right_wd = total_wd - left_wd;
            const double gain =
                (left_wd * left_wd * right_w + right_wd * right_wd * left_w) /
                (left_w * right_w);
            if (gain > best_gain) {
              best_gain = gain;
              best_feature = static_cast<int>(f);
              best_threshold = threshold;
            }
          }
        }
        const double wt = weights_[i];
        left_w += wt;
        left_wd += wt * (targets_[i] - stats.anchor);
        prev_value = value;
        have_prev = true;
      }
    }

    if (best_feature < 0) return;

    Scratch& scratch = levels_[static_cast<std::size_t>(depth)];
    const double* split_col = presort_->column(static_cast<std::size_t>(best_feature));
    for (std::size_t f = 0; f < n_features_; ++f) {
      scratch.left[f].clear();
      scratch.right[f].clear();
      for (int ri : order[f]) {
        if (split_col[ri] <= best_threshold)
          scratch.left[f].push_back(ri);
        else
          scratch.right[f].push_back(ri);
      }
    }

    const int left_index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    const int right_index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    {
      auto& nd = tree.nodes[static_cast<std::size_t>(node_index)];
      nd.feature = best_feature;
      nd.threshold = best_threshold;
      nd.left = left_index;
      nd.right = right_index;
    }
    // Deeper levels own their own scratch, so this level's buffers survive
    // the left subtree while the right side waits.
    grow(tree, left_index, depth + 1, scratch.left);
    grow(tree, right_index, depth + 1, scratch.right);
  }

  static inline const std::vector<int> kEmpty{};

  const TreePresort* presort_;
  std::span<const std::vector<double>> rows_;
  std::span<const double> targets_;
  std::span<const double> weights_;
  std::size_t n_features_;
  int max_depth_;
  std::vector<Scratch> levels_;
  std::vector<std::vector<int>> root_;
  std::vector<std::vector<int>> full_orders_;
  std::vector<std::vector<int>> filtered_orders_;
};

}  // namespace tree_detail

/// Reusable fitter over one presorted row set; see tree_detail::Builder.
using TreeFitter = tree_detail::Builder;

/// Greedy weighted-SSE tree fit. Candidate thresholds are midpoints of
/// consecutive distinct feature values among the rows present in a node;
/// ties between equally good splits resolve to the lowest feature index,
/// then the lowest threshold. Rows with zero weight are ignored entirely.
inline RegressionTree fit_tree_presorted(const TreePresort& presort,
                                         std::span<const double> targets,
                                         std::span<const double> weights, int max_depth) {
  const std::size_t n = presort.rows().size();
  if (n == 0 || targets.size() != n || weights.size() != n)
    throw ValueError("fit_tree: rows, targets and weights must be nonempty and equal length");
  double total_w = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ValueError("fit_tree: negative weight");
    total_w += w;
  }
  if (!(total_w > 0.0)) throw ValueError("fit_tree: weights must sum to > 0");
  if (max_depth < 0) throw ValueError("fit_tree: max_depth must be >= 0");

  if (presort.features() == 0) {
    tree_detail::NodeStats stats;
    stats.anchor = targets[0];
    for (std::size_t i = 0; i < n; ++i)
      if (weights[i] > 0.0) stats.add(weights[i], targets[i]);
    RegressionTree tree;
    TreeNode leaf;
    leaf.value = stats.mean();
    tree.nodes.push_back(leaf);
    return tree;
  }

  tree_detail::Builder builder(presort, max_depth);
  return builder.fit(targets, weights);
}

inline RegressionTree fit_tree(const std::vector<std::vector<double>>& rows,
                               const std::vector<double>& targets,
                               const std::vector<double>& weights, int max_depth = 3) {
  TreePresort presort(std::span<const std::vector<double>>(rows.data(), rows.size()));
  return fit_tree_presorted(presort, targets, weights, max_depth);
}

}  // namespace kpisentinel
