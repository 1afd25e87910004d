#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace kpisentinel {

/// Raised for malformed input files and schema violations.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an operation's preconditions are not met.
struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing samples are carried as quiet NaN, never as 0.
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

inline bool is_missing(double v) { return std::isnan(v); }

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return missing_value();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Median of an unsorted vector (copies input). Even n averages the two middles.
inline double median_of(std::vector<double> v) {
  if (v.empty()) return missing_value();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolation quantile over sorted data: position q*(n-1).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return missing_value();
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, q);
}

/// MAD scaled by 1.4826 so it estimates sigma under normality.
inline double scaled_mad(const std::vector<double>& v) {
  if (v.empty()) return missing_value();
  const double med = median_of(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::fabs(x - med));
  return 1.4826 * median_of(std::move(dev));
}

/// Pearson correlation; NaN when fewer than 3 pairs or either side has zero variance.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValueError("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 3) return missing_value();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  // Zero variance up to the rounding noise a constant series accumulates.
  const double tol_a = 1e-24 * static_cast<double>(n) * std::max(1.0, ma * ma);
  const double tol_b = 1e-24 * static_cast<double>(n) * std::max(1.0, mb * mb);
  if (saa <= tol_a || sbb <= tol_b) return missing_value();
  return sab / std::sqrt(saa * sbb);
}

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
/// Returns false when the system is singular to working precision.
inline bool solve_linear_system(std::vector<std::vector<double>>& a, std::vector<double>& b,
                                std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    if (std::fabs(a[pivot][col]) < 1e-300) return false;
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return true;
}

}  // namespace kpisentinel
