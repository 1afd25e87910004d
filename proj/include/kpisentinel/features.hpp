#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kpisentinel/util.hpp"

namespace kpisentinel {

struct FeatureConfig {
  int window_length = 48;  // W
  int max_lag = 20;        // m_T

  /// The AR order actually fitted: lags beyond it are zero-padded.
  int effective_lag() const { return std::min(max_lag, (window_length - 1) / 2); }

  /// Fixed feature-vector width for this config.
  int width() const { return 13 + max_lag; }
};

struct SampleStats {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased, n-1 denominator
  double skewness = 0.0;  // adjusted Fisher-Pearson coefficient
  double kurtosis = 0.0;  // m4 / m2^2 on biased central moments
  double median = 0.0;
  bool skewness_flagged = false;  // n < 3, skewness set to 0 by convention
};

/// Degenerate-spread guard: a constant window accumulates rounding noise of
/// order (mean * 2^-52)^2 in its second moment, so "zero variance" has to be
/// read relative to the window's location.
inline bool negligible_m2(double m2, double mean) {
  return m2 <= 1e-24 * std::max(1.0, mean * mean);
}

/// Basic order and moment statistics of one window.
inline SampleStats sample_statistics(const std::vector<double>& window) {
  const std::size_t n = window.size();
  if (n < 2) throw ValueError("sample_statistics: window length must be >= 2");
  SampleStats s;
  s.max = *std::max_element(window.begin(), window.end());
  s.min = *std::min_element(window.begin(), window.end());
  double sum = 0.0;
  for (double v : window) sum += v;
  s.mean = sum / static_cast<double>(n);

  double m2 = 0.0, m3 = 0.0, m4 = 0.0, ss = 0.0;
  for (double v : window) {
    const double d = v - s.mean;
    const double d2 = d * d;
    ss += d2;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double dn = static_cast<double>(n);
  s.variance = ss / (dn - 1.0);
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;
  if (negligible_m2(m2, s.mean)) s.variance = 0.0;

  if (!negligible_m2(m2, s.mean)) {
    if (n >= 3)
      s.skewness = std::sqrt(dn * (dn - 1.0)) / (dn - 2.0) * m3 / std::pow(m2, 1.5);
    else
      s.skewness_flagged = true;  // adjustment factor undefined, keep 0
    s.kurtosis = m4 / (m2 * m2);
  }

  std::vector<double> sorted(window);
  std::sort(sorted.begin(), sorted.end());
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

struct DistributionFeatures {
  int var_gt_std = 0;  // 1 iff variance > sqrt(variance)
  int count_above_median = 0;
  int count_below_median = 0;
};

inline DistributionFeatures distribution_features(const std::vector<double>& window) {
  if (window.empty()) throw ValueError("distribution_features: empty window");
  DistributionFeatures f;
  double variance = 0.0, median = 0.0;
  if (window.size() >= 2) {
    const SampleStats s = sample_statistics(window);
    variance = s.variance;
    median = s.median;
  } else {
    median = window[0];
  }
  f.var_gt_std = variance > std::sqrt(variance) ? 1 : 0;
  for (double v : window) {
    if (v > median) ++f.count_above_median;
    if (v < median) ++f.count_below_median;
  }
  return f;
}

struct ArFit {
  double intercept = 0.0;
  std::vector<double> coefficients;  // [1..p]
  bool singular = false;             // system unsolvable even with jitter
};

/// Conditional least-squares AR(p) fit: x_t regressed on its p lags with an
/// unpenalized intercept and ridge jitter 1e-9 on the lag Gram diagonal.
/// Solved via centered normal equations, which keeps a constant series at
/// intercept = c with zero coefficients.
inline ArFit fit_ar(const std::vector<double>& window, int p) {
  const std::size_t n = window.size();
  if (p < 1) throw ValueError("fit_ar: lag order must be >= 1");
  if (n < static_cast<std::size_t>(2 * p + 1))
    throw ValueError("fit_ar: window length must be >= 2p + 1");

  const std::size_t rows = n - static_cast<std::size_t>(p);
  const std::size_t np = static_cast<std::size_t>(p);

  // Column means: predictor k is x_{t-k}, response is x_t, t = p..n-1.
  std::vector<double> xbar(np, 0.0);
  double ybar = 0.0;
  for (std::size_t t = np; t < n; ++t) {
    ybar += window[t];
    for (std::size_t k = 0; k < np; ++k) xbar[k] += window[t - 1 - k];
  }
  ybar /= static_cast<double>(rows);
  for (auto& v : xbar) v /= static_cast<double>(rows);

  std::vector<std::vector<double>> gram(np, std::vector<double>(np, 0.0));
  std::vector<double> rhs(np, 0.0);
  for (std::size_t t = np; t < n; ++t) {
    const double dy = window[t] - ybar;
    for (std::size_t j = 0; j < np; ++j) {
      const double dj = window[t - 1 - j] - xbar[j];
      rhs[j] += dj * dy;
      for (std::size_t k = j; k < np; ++k)
        gram[j][k] += dj * (window[t - 1 - k] - xbar[k]);
    }
  }
  for (std::size_t j = 0; j < np; ++j) {
    for (std::size_t k = 0; k < j; ++k) gram[j][k] = gram[k][j];
    gram[j][j] += 1e-9;
  }

  ArFit fit;
  std::vector<double> phi;
  if (!solve_linear_system(gram, rhs, phi)) {
    fit.singular = true;
    fit.intercept = ybar;
    fit.coefficients.assign(np, 0.0);
    return fit;
  }
  fit.coefficients = std::move(phi);
  fit.intercept = ybar;
  for (std::size_t k = 0; k < np; ++k) fit.intercept -= fit.coefficients[k] * xbar[k];
  return fit;
}

/// Mean absolute first difference.
inline double mean_abs_change(const std::vector<double>& window) {
  if (window.size() < 2) throw ValueError("mean_abs_change: window length must be >= 2");
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < window.size(); ++t)
    sum += std::fabs(window[t + 1] - window[t]);
  return sum / static_cast<double>(window.size() - 1);
}

/// Autocorrelation at one lag, population-variance normalized:
/// R(l) = sum_t (x_t - mu)(x_{t+l} - mu) / ((n - l) * var_pop).
inline double autocorrelation_at(const std::vector<double>& window, int lag) {
  const std::size_t n = window.size();
  if (lag < 1 || static_cast<std::size_t>(lag) >= n)
    throw ValueError("autocorrelation_at: lag out of range");
  double mu = 0.0;
  for (double v : window) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : window) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  if (negligible_m2(var, mu)) return 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < n; ++t)
    s += (window[t] - mu) * (window[t + static_cast<std::size_t>(lag)] - mu);
  return s / (static_cast<double>(n - static_cast<std::size_t>(lag)) * var);
}

/// Mean of R(l) over lags 1..n-2. Longer lags average too few products to be
/// stable, so the range is truncated there. Constant windows return 0.
inline double mean_autocorrelation(const std::vector<double>& window, bool* flagged = nullptr) {
  const std::size_t n = window.size();
  if (n < 3) throw ValueError("mean_autocorrelation: window length must be >= 3");
  double mu = 0.0;
  for (double v : window) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : window) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  if (negligible_m2(var, mu)) {
    if (flagged) *flagged = true;
    return 0.0;
  }
  if (flagged) *flagged = false;
  double sum = 0.0;
  for (int l = 1; l <= static_cast<int>(n) - 2; ++l) sum += autocorrelation_at(window, l);
  return sum / static_cast<double>(n - 2);
}

inline std::vector<std::string> feature_names(const FeatureConfig& config) {
  std::vector<std::string> names = {"max",
                                    "min",
                                    "mean",
                                    "variance",
                                    "skewness",
                                    "kurtosis",
                                    "median",
                                    "var_gt_std",
                                    "count_above_median",
                                    "count_below_median",
                                    "ar_intercept"};
  for (int k = 1; k <= config.max_lag; ++k) names.push_back("ar_coef_" + std::to_string(k));
  names.push_back("mean_abs_change");
  names.push_back("mean_autocorrelation");
  return names;
}

/// Full fixed-order feature vector of one window; width is 13 + m_T for any
/// window under a given config.
inline std::vector<double> extract_features(const std::vector<double>& window,
                                            const FeatureConfig& config) {
  if (static_cast<int>(window.size()) != config.window_length)
    throw ValueError("extract_features: window length " + std::to_string(window.size()) +
                     " does not match configured W = " + std::to_string(config.window_length));
  for (double v : window)
    if (!std::isfinite(v)) throw ValueError("extract_features: window contains missing values");

  const SampleStats s = sample_statistics(window);
  const DistributionFeatures d = distribution_features(window);
  const int p = config.effective_lag();
  const ArFit ar = fit_ar(window, p);

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(config.width()));
  out.push_back(s.max);
  out.push_back(s.min);
  out.push_back(s.mean);
  out.push_back(s.variance);
  out.push_back(s.skewness);
  out.push_back(s.kurtosis);
  out.push_back(s.median);
  out.push_back(static_cast<double>(d.var_gt_std));
  out.push_back(static_cast<double>(d.count_above_median));
  out.push_back(static_cast<double>(d.count_below_median));
  out.push_back(ar.intercept);
  for (int k = 0; k < config.max_lag; ++k)
    out.push_back(k < p ? ar.coefficients[static_cast<std::size_t>(k)] : 0.0);
  out.push_back(mean_abs_change(window));
  out.push_back(mean_autocorrelation(window));
  return out;
}

}  // namespace kpisentinel
