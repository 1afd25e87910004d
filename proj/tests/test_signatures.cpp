#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kpisentinel/rng.hpp"
#include "kpisentinel/signatures.hpp"

using namespace kpisentinel;

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

/// One week per cell: weekly profile plus per-cell offset plus noise.
std::vector<double> weekly_series(double offset, double noise_sigma, Rng& rng, int weeks = 1) {
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(weeks) * kHoursPerWeek);
  for (int t = 0; t < weeks * kHoursPerWeek; ++t) {
    const double daily = 0.3 * std::sin(kTwoPi * (t % 24) / 24.0);
    const double weekly = 0.1 * std::sin(kTwoPi * (t % kHoursPerWeek) / 168.0);
    s.push_back(0.5 + daily + weekly + offset +
                (noise_sigma > 0.0 ? rng.normal(0.0, noise_sigma) : 0.0));
  }
  return s;
}

}  // namespace

TEST_CASE("normalize maps to [0,1] with documented conventions", "[signatures]") {
  CHECK(normalize({2.0, 4.0, 6.0}) == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(normalize({5.0, 5.0, 5.0}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK_THROWS_AS(normalize({missing_value(), missing_value()}), ValueError);

  // Missing entries pass through.
  const auto out = normalize({1.0, missing_value(), 3.0});
  CHECK(out[0] == 0.0);
  CHECK(is_missing(out[1]));
  CHECK(out[2] == 1.0);
}

TEST_CASE("normalize preserves order and extrema", "[signatures][property]") {
  Rng rng(17);
  std::vector<double> series;
  for (int i = 0; i < 200; ++i) series.push_back(rng.uniform(-50.0, 50.0));
  const auto norm = normalize(series);
  std::size_t argmin = 0, argmax = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(norm[i] >= 0.0);
    CHECK(norm[i] <= 1.0);
    if (series[i] < series[argmin]) argmin = i;
    if (series[i] > series[argmax]) argmax = i;
  }
  CHECK(norm[argmin] == 0.0);
  CHECK(norm[argmax] == 1.0);
  for (std::size_t i = 1; i < series.size(); ++i)
    if (series[i - 1] <= series[i]) CHECK(norm[i - 1] <= norm[i]);
}

TEST_CASE("cluster_signature of identical cells is the series with zero dispersion",
          "[signatures]") {
  Rng rng(1);
  const auto base = weekly_series(0.0, 0.0, rng);
  const std::vector<std::vector<double>> rows = {base, base, base};
  const auto sig = cluster_signature(rows, 0, 0, KpiKind::HOSR);
  for (int h = 0; h < kHoursPerWeek; ++h) {
    CHECK(sig.reference[static_cast<std::size_t>(h)] ==
          Catch::Approx(base[static_cast<std::size_t>(h)]).margin(1e-12));
    CHECK(sig.dispersion[static_cast<std::size_t>(h)] == 0.0);
  }
  CHECK(sig.interpolated_hours.empty());
}

TEST_CASE("cluster_signature of two offset cells is the pointwise median", "[signatures]") {
  Rng rng(2);
  const auto base = weekly_series(0.0, 0.0, rng);
  auto shifted = base;
  for (auto& v : shifted) v += 0.2;
  const auto sig = cluster_signature({base, shifted}, 0, 0, KpiKind::HOSR);
  for (int h = 0; h < kHoursPerWeek; ++h)
    CHECK(sig.reference[static_cast<std::size_t>(h)] ==
          Catch::Approx(base[static_cast<std::size_t>(h)] + 0.1).margin(1e-12));
}

TEST_CASE("cluster_signature matches a direct per-hour median/MAD oracle",
          "[signatures][oracle]") {
  Rng rng(3);
  std::vector<std::vector<double>> rows;
  const int weeks = 2;
  for (int c = 0; c < 5; ++c) rows.push_back(weekly_series(0.05 * c, 0.1, rng, weeks));
  const int start_how = 24;  // series starts on a Tuesday
  const auto sig = cluster_signature(rows, start_how, 3, KpiKind::DL_TRAFFIC);

  for (int h = 0; h < kHoursPerWeek; ++h) {
    // Oracle: gather every (cell, week) sample whose hour-of-week is h.
    std::vector<double> bucket;
    for (const auto& row : rows)
      for (int t = 0; t < weeks * kHoursPerWeek; ++t)
        if ((start_how + t) % kHoursPerWeek == h) bucket.push_back(row[static_cast<std::size_t>(t)]);
    std::sort(bucket.begin(), bucket.end());
    const std::size_t n = bucket.size();
    const double med = n % 2 ? bucket[n / 2] : 0.5 * (bucket[n / 2 - 1] + bucket[n / 2]);
    std::vector<double> dev;
    for (double v : bucket) dev.push_back(std::fabs(v - med));
    std::sort(dev.begin(), dev.end());
    const double mad = n % 2 ? dev[n / 2] : 0.5 * (dev[n / 2 - 1] + dev[n / 2]);

    CHECK(sig.reference[static_cast<std::size_t>(h)] == Catch::Approx(med).margin(1e-12));
    CHECK(sig.dispersion[static_cast<std::size_t>(h)] ==
          Catch::Approx(1.4826 * mad).margin(1e-12));
  }
}

TEST_CASE("cluster_signature interpolates hours missing everywhere", "[signatures]") {
  Rng rng(4);
  auto row = weekly_series(0.0, 0.0, rng);
  // Kill hour-of-week 50 across the board.
  row[50] = missing_value();
  const auto sig = cluster_signature({row}, 0, 0, KpiKind::HOSR);
  REQUIRE(sig.interpolated_hours == std::vector<int>{50});
  const double expect = 0.5 * (row[49] + row[51]);
  CHECK(sig.reference[50] == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("decompose splits constant, linear and periodic series as documented",
          "[signatures]") {
  std::vector<double> trend, remainder;

  SECTION("constant series") {
    std::vector<double> s(60, 4.2);
    decompose(s, trend, remainder);
    for (std::size_t t = 0; t < s.size(); ++t) {
      CHECK(trend[t] == Catch::Approx(4.2).margin(1e-12));
      CHECK(remainder[t] == Catch::Approx(0.0).margin(1e-12));
    }
  }

  SECTION("linear ramp is reproduced exactly in the interior") {
    std::vector<double> s;
    for (int t = 0; t < 80; ++t) s.push_back(1.5 + 0.25 * t);
    decompose(s, trend, remainder);
    for (int t = 12; t < 80 - 12; ++t)
      CHECK(trend[static_cast<std::size_t>(t)] ==
            Catch::Approx(s[static_cast<std::size_t>(t)]).margin(1e-9));
  }

  SECTION("period-24 sinusoid flattens to its mean in the interior") {
    std::vector<double> s;
    for (int t = 0; t < 96; ++t)
      s.push_back(3.0 + std::sin(kTwoPi * t / 24.0));
    decompose(s, trend, remainder);
    for (int t = 12; t < 96 - 12; ++t)
      CHECK(trend[static_cast<std::size_t>(t)] == Catch::Approx(3.0).margin(1e-9));
  }

  SECTION("series shorter than 25 is rejected") {
    std::vector<double> s(24, 1.0);
    CHECK_THROWS_AS(decompose(s, trend, remainder), ValueError);
  }
}

TEST_CASE("detect_anomalies is silent when the week equals its reference", "[signatures]") {
  Rng rng(5);
  const auto base = weekly_series(0.0, 0.0, rng);
  auto sig = cluster_signature({base}, 0, 0, KpiKind::HOSR);
  for (auto& d : sig.dispersion) d = 0.05;
  const auto report = detect_anomalies(base, 0, 0, sig, 3.0, 4);
  CHECK(report.empty());
}

TEST_CASE("an injected 5-sigma 72h shift produces one well-covered event",
          "[signatures][oracle]") {
  Rng rng(6);
  const auto base = weekly_series(0.0, 0.0, rng);
  auto sig = cluster_signature({base}, 0, 0, KpiKind::HOSR);
  const double sigma = 0.05;
  for (auto& d : sig.dispersion) d = sigma;

  auto scored = base;
  const int win_start = 40, win_len = 72;
  for (int t = win_start; t < win_start + win_len; ++t)
    scored[static_cast<std::size_t>(t)] += 5.0 * sigma;

  const auto report = detect_anomalies(scored, 0, 1000, sig, 3.0, 4);
  REQUIRE(report.size() == 1);
  const auto& ev = report[0];
  CHECK(ev.direction == 1);
  CHECK(ev.peak_score > 3.0);
  // Event hours are global: the scored window started at offset 1000.
  const std::int64_t lo = std::max<std::int64_t>(ev.start_hour, 1000 + win_start);
  const std::int64_t hi = std::min<std::int64_t>(ev.end_hour + 1, 1000 + win_start + win_len);
  const double coverage = static_cast<double>(hi - lo) / win_len;
  CHECK(coverage >= 0.8);
}

TEST_CASE("short spikes below min_run are gated away", "[signatures]") {
  Rng rng(7);
  const auto base = weekly_series(0.0, 0.0, rng);
  auto sig = cluster_signature({base}, 0, 0, KpiKind::HOSR);
  for (auto& d : sig.dispersion) d = 0.05;

  auto scored = base;
  scored[80] += 10.0 * 0.05;  // a single-hour spike
  const auto report = detect_anomalies(scored, 0, 0, sig, 3.0, 4);
  CHECK(report.empty());
}

TEST_CASE("event count never grows when the threshold rises", "[signatures][property]") {
  Rng rng(8);
  auto base = weekly_series(0.0, 0.02, rng);
  auto sig = cluster_signature({weekly_series(0.0, 0.0, rng)}, 0, 0, KpiKind::HOSR);
  for (auto& d : sig.dispersion) d = 0.03;
  for (int t = 30; t < 90; ++t) base[static_cast<std::size_t>(t)] += 0.15;
  for (int t = 120; t < 140; ++t) base[static_cast<std::size_t>(t)] -= 0.1;

  std::size_t last = std::numeric_limits<std::size_t>::max();
  for (double threshold : {1.0, 2.0, 3.0, 4.0, 6.0, 10.0}) {
    const auto report = detect_anomalies(base, 0, 0, sig, threshold, 4);
    CHECK(report.size() <= last);
    last = report.size();
    for (const auto& ev : report) CHECK(ev.peak_score > threshold);
  }
}

TEST_CASE("zero dispersion with nonzero deviation flags an infinite score", "[signatures]") {
  Rng rng(9);
  const auto base = weekly_series(0.0, 0.0, rng);
  auto sig = cluster_signature({base}, 0, 0, KpiKind::HOSR);  // dispersion exactly 0

  auto scored = base;
  for (int t = 50; t < 80; ++t) scored[static_cast<std::size_t>(t)] += 0.2;
  const auto report = detect_anomalies(scored, 0, 0, sig, 3.0, 4);
  REQUIRE(report.size() == 1);
  CHECK(report[0].zero_dispersion);
  CHECK(std::isinf(report[0].peak_score));
}

TEST_CASE("single_week_signature excludes the scored day from its reference", "[signatures]") {
  // Day-periodic data, with day 3 lifted: the reference for day-3 hours is
  // built from the other days and must stay at the clean profile.
  std::vector<double> row;
  for (int t = 0; t < kHoursPerWeek; ++t) {
    double v = 1.0 + 0.5 * std::sin(kTwoPi * (t % 24) / 24.0);
    if (t / 24 == 3) v += 9.0;
    row.push_back(v);
  }
  const auto sig = single_week_signature({row}, 0, 0, KpiKind::HOSR);
  for (int h = 3 * 24; h < 4 * 24; ++h) {
    const double clean = 1.0 + 0.5 * std::sin(kTwoPi * (h % 24) / 24.0);
    CHECK(sig.reference[static_cast<std::size_t>(h)] == Catch::Approx(clean).margin(1e-9));
  }
  // And other days' references are polluted only via the median, which the
  // single lifted day cannot move.
  for (int h = 0; h < 24; ++h) {
    const double clean = 1.0 + 0.5 * std::sin(kTwoPi * h / 24.0);
    CHECK(sig.reference[static_cast<std::size_t>(h)] == Catch::Approx(clean).margin(1e-9));
  }
}

TEST_CASE("cluster_correlation basics and oracle agreement", "[signatures][oracle]") {
  Rng rng(10);
  std::array<std::vector<double>, kKpiCount> series;
  const int n = 200;
  std::vector<double> shared;
  for (int t = 0; t < n; ++t) shared.push_back(std::sin(kTwoPi * t / 24.0));

  for (int t = 0; t < n; ++t) {
    const double noise = rng.normal(0.0, 0.1);
    series[0].push_back(0.5 + 0.4 * shared[static_cast<std::size_t>(t)] + noise);
    series[1].push_back(-series[0].back());                     // exact negation of KPI 0
    series[2].push_back(0.3 + 0.2 * shared[static_cast<std::size_t>(t)] +
                        rng.normal(0.0, 0.05));                 // correlated via shared daily term
    series[3].push_back(0.7);                                   // constant: undefined correlation
  }

  const auto corr = cluster_correlation(series);

  CHECK(corr[0][0] == 1.0);
  CHECK(corr[1][1] == 1.0);
  CHECK(corr[0][1] == Catch::Approx(-1.0).margin(1e-12));

  // Direct-formula oracle for the (0, 2) pair.
  double ma = 0.0, mb = 0.0;
  for (int t = 0; t < n; ++t) {
    ma += series[0][static_cast<std::size_t>(t)];
    mb += series[2][static_cast<std::size_t>(t)];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (int t = 0; t < n; ++t) {
    const double da = series[0][static_cast<std::size_t>(t)] - ma;
    const double db = series[2][static_cast<std::size_t>(t)] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double expected = sab / std::sqrt(saa * sbb);
  CHECK(corr[0][2] == Catch::Approx(expected).margin(1e-9));
  CHECK(expected > 0.5);  // the shared daily component binds them

  // Zero-variance series: whole row/column undefined, symmetric elsewhere.
  for (int a = 0; a < kKpiCount; ++a) {
    CHECK(is_missing(corr[static_cast<std::size_t>(a)][3]));
    CHECK(is_missing(corr[3][static_cast<std::size_t>(a)]));
    for (int b = 0; b < kKpiCount; ++b) {
      const double x = corr[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      const double y = corr[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];
      if (!is_missing(x) && !is_missing(y)) CHECK(x == Catch::Approx(y).margin(1e-12));
    }
  }
}

TEST_CASE("median_series takes per-hour medians and keeps empty hours missing", "[signatures]") {
  std::vector<std::vector<double>> rows = {
      {1.0, missing_value(), 3.0},
      {2.0, missing_value(), 5.0},
      {9.0, missing_value(), 4.0},
  };
  const auto med = median_series(rows);
  CHECK(med[0] == 2.0);
  CHECK(is_missing(med[1]));
  CHECK(med[2] == 4.0);
}
