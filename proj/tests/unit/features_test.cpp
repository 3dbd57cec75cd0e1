#include "pead/features.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pead/error.hpp"
#include "pead/synth.hpp"

namespace pead::features {
namespace {

using std::chrono::days;

std::vector<double> present_values(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) {
    if (!std::isnan(x)) out.push_back(x);
  }
  return out;
}

market::EarningsEvent make_event(const std::string& id, FiscalQuarter q, double reported, double consensus) {
  market::EarningsEvent ev;
  ev.company_id = id;
  ev.quarter = q;
  ev.reported_eps = reported;
  ev.consensus_eps = consensus;
  return ev;
}

// Two companies with four quarters each, every metric present, a year of
// weekday prices and one event per quarter near the end of the calendar.
market::RawDataset small_dataset() {
  market::RawDataset raw;
  std::vector<Date> dates;
  for (Date d = parse_date("2017-01-02"); d <= parse_date("2018-12-31"); d += days{1}) {
    const std::chrono::weekday w{d};
    if (w != std::chrono::Saturday && w != std::chrono::Sunday) dates.push_back(d);
  }
  raw.calendar = market::TradingCalendar(dates);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 0.01);
  double idx = 100.0;
  for (Date d : dates) {
    raw.index.set(d, idx);
    idx *= 1.0 + z(rng);
  }
  for (const char* id : {"BBB", "AAA"}) {
    auto& s = raw.prices.emplace(id, market::PriceSeries(id)).first->second;
    double p = 30.0;
    for (Date d : dates) {
      s.set(d, p);
      p *= 1.0 + z(rng);
    }
    for (int q = 1; q <= 4; ++q) {
      auto ev = make_event(id, {2018, q}, 1.0 + 0.1 * q, 1.0);
      for (std::size_t j = 0; j < default_base_metrics().size(); ++j) {
        ev.fundamentals[default_base_metrics()[j]] = static_cast<double>(j) + std::pow(1.5, q) * (id[0] == 'A' ? 1 : 2);
      }
      ev.announce_date = raw.calendar.at(300 + static_cast<std::size_t>(q) * 40);
      ev.t0 = ev.announce_date;
      raw.events.push_back(ev);
    }
  }
  std::sort(raw.events.begin(), raw.events.end(),
            [](const auto& a, const auto& b) { return a.key() < b.key(); });
  return raw;
}

TEST(DeltaFeatureTest, Examples) {
  const std::map<FiscalQuarter, double> two{{{2018, 1}, 10.0}, {{2018, 2}, 12.0}};
  EXPECT_EQ(delta_feature(two, {2018, 2}, 1), 2.0);
  const std::map<FiscalQuarter, double> yearly{{{2017, 3}, 5.0}, {{2018, 3}, 9.0}};
  EXPECT_EQ(delta_feature(yearly, {2018, 3}, 4), 4.0);
  const std::map<FiscalQuarter, double> one{{{2018, 2}, 12.0}};
  EXPECT_FALSE(delta_feature(one, {2018, 2}, 1).has_value());
}

TEST(DeltaFeatureTest, LagCrossesYearBoundary) {
  const std::map<FiscalQuarter, double> s{{{2017, 4}, 3.0}, {{2018, 1}, 7.5}};
  EXPECT_EQ(delta_feature(s, {2018, 1}, 1), 4.5);
}

TEST(SurpriseFeaturesTest, Examples) {
  std::vector<market::EarningsEvent> events{
      make_event("AAA", {2018, 1}, 1.01, 1.00),
      make_event("AAA", {2018, 2}, 1.02, 1.00),
      make_event("AAA", {2018, 3}, 1.03, 1.00),
      make_event("AAA", {2018, 4}, 0.55, 0.50),
  };
  const auto s = surprise_features(events, {2018, 4});
  ASSERT_TRUE(s.current && s.diff_previous && s.diff_average3);
  EXPECT_NEAR(*s.current, 0.05, 1e-12);
  EXPECT_NEAR(*s.diff_previous, 0.02, 1e-12);
  EXPECT_NEAR(*s.diff_average3, 0.03, 1e-12);

  const auto first = surprise_features(events, {2018, 1});
  EXPECT_TRUE(first.current.has_value());
  EXPECT_FALSE(first.diff_previous.has_value());
  EXPECT_FALSE(first.diff_average3.has_value());
}

TEST(SurpriseFeaturesTest, PreviousQuarterDifference) {
  std::vector<market::EarningsEvent> events{make_event("AAA", {2018, 1}, 0.52, 0.50),
                                            make_event("AAA", {2018, 2}, 0.55, 0.50)};
  const auto s = surprise_features(events, {2018, 2});
  ASSERT_TRUE(s.diff_previous.has_value());
  EXPECT_NEAR(*s.diff_previous, 0.03, 1e-12);
}

TEST(RsiTest, Extremes) {
  std::vector<double> up;
  std::vector<double> down;
  std::vector<double> alt;
  for (int i = 0; i < 31; ++i) {
    up.push_back(10.0 + i);
    down.push_back(50.0 - i);
    alt.push_back(i % 2 == 0 ? 10.0 : 11.0);
  }
  EXPECT_EQ(rsi(up, 9), 100.0);
  EXPECT_EQ(rsi(down, 9), 0.0);
  EXPECT_EQ(rsi(alt, 30), 50.0);
  EXPECT_EQ(rsi(std::vector<double>(10, 4.0), 9), 50.0);
  EXPECT_THROW(rsi(up, 31), std::invalid_argument);
}

TEST(RsiTest, UsesOnlyLastPeriodChanges) {
  // Large early loss outside the window must not count.
  std::vector<double> c{100.0, 10.0, 11.0, 12.0, 11.0};
  // Changes in window of 3: +1, +1, -1 -> avg gain 2/3, avg loss 1/3, RS 2.
  EXPECT_NEAR(rsi(c, 3), 100.0 - 100.0 / 3.0, 1e-12);
}

TEST(MaRatioTest, Examples) {
  EXPECT_EQ(ma_ratio(std::vector<double>(60, 7.0), 5, 50), 1.0);
  const std::vector<double> c{1, 1, 1, 1, 3};
  EXPECT_NEAR(ma_ratio(c, 1, 5), 3.0 / 1.4, 1e-12);
  std::vector<double> linear;
  for (int i = 0; i < 60; ++i) linear.push_back(1.0 + i);
  EXPECT_GT(ma_ratio(linear, 5, 50), 1.0);
  EXPECT_THROW(ma_ratio(c, 1, 6), std::invalid_argument);
  EXPECT_THROW(ma_ratio(c, 5, 5), std::invalid_argument);
}

TEST(WinsorizeTest, Examples) {
  const std::vector<double> v{1, 2, 3};
  EXPECT_EQ(winsorize(v, 0.0, 1.0), v);
  const std::vector<double> flat(7, 2.5);
  EXPECT_EQ(winsorize(flat, 0.3, 0.6), flat);

  const std::vector<double> outlier{1, 2, 3, 4, 100};
  const auto w = winsorize(outlier, 0.05, 0.95);
  const double hi = oracle::nearest_rank(outlier, 0.95);
  const double lo = oracle::nearest_rank(outlier, 0.05);
  for (std::size_t i = 0; i < outlier.size(); ++i) EXPECT_EQ(w[i], std::clamp(outlier[i], lo, hi));
}

TEST(WinsorizeTest, AllMissingIsIdentity) {
  const std::vector<double> v(4, kMissing);
  const auto w = winsorize(v, 0.1, 0.9);
  ASSERT_EQ(w.size(), 4U);
  for (double x : w) EXPECT_TRUE(std::isnan(x));
}

TEST(WinsorizeTest, Properties) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 40);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng) < 0.2 ? kMissing : std::round(z(rng) * 4.0) / 4.0;
    const double lo = u(rng) * 0.3;
    const double hi = 0.7 + u(rng) * 0.3;
    const auto once = winsorize(v, lo, hi);
    const auto twice = winsorize(once, lo, hi);
    ASSERT_EQ(once.size(), v.size());
    const auto pv = present_values(v);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_EQ(std::isnan(once[i]), std::isnan(v[i]));
      if (std::isnan(v[i])) continue;
      EXPECT_EQ(twice[i], once[i]);
      EXPECT_GE(once[i], *std::min_element(pv.begin(), pv.end()));
      EXPECT_LE(once[i], *std::max_element(pv.begin(), pv.end()));
      EXPECT_EQ(once[i], std::clamp(v[i], oracle::nearest_rank(pv, lo), oracle::nearest_rank(pv, hi)));
    }
  }
}

TEST(StandardizeTest, Examples) {
  const auto s = standardize(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(s[0], -1.224745, 1e-6);
  EXPECT_NEAR(s[1], 0.0, 1e-12);
  EXPECT_NEAR(s[2], 1.224745, 1e-6);
  for (double x : standardize(std::vector<double>(5, 9.0))) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(standardize(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(standardize(std::vector<double>{kMissing}), std::invalid_argument);
}

TEST(StandardizeTest, KeepsMissingPositions) {
  const auto s = standardize(std::vector<double>{1, kMissing, 3});
  EXPECT_EQ(s[0], -1.0);
  EXPECT_TRUE(std::isnan(s[1]));
  EXPECT_EQ(s[2], 1.0);
}

TEST(FeatureSpecTest, DefaultColumns) {
  const auto spec = FeatureSpec::defaults();
  EXPECT_EQ(spec.base_metrics.size(), 28U);
  EXPECT_EQ(spec.column_names().size(), 93U);
  EXPECT_EQ(spec.standardize.size(), 84U);
  EXPECT_NO_THROW(spec.validate());
}

TEST(FeatureSpecTest, TwentyNineMetricsGiveNinetySixColumns) {
  auto spec = FeatureSpec::defaults();
  spec.base_metrics.push_back("Total_Asset_Reported");
  EXPECT_EQ(spec.column_names().size(), 29U * 3 + 3 + 5 + 1);
  EXPECT_EQ(spec.column_names().size(), 96U);
}

TEST(FeatureSpecTest, ValidateRejectsBadSpecs) {
  auto dup = FeatureSpec::defaults();
  dup.base_metrics.push_back("Cash");
  EXPECT_THROW(dup.validate(), ConfigError);
  auto limits = FeatureSpec::defaults();
  limits.winsor_lower = 0.9;
  limits.winsor_upper = 0.1;
  EXPECT_THROW(limits.validate(), ConfigError);
  auto unknown = FeatureSpec::defaults();
  unknown.standardize.push_back("Nope");
  EXPECT_THROW(unknown.validate(), ConfigError);
}

TEST(BuildMatrixTest, RowsSortedByCompanyThenQuarter) {
  const auto raw = small_dataset();
  auto spec = FeatureSpec::defaults();
  spec.max_missing_fraction = 1.0;
  const auto built = build_matrix(raw, spec);
  ASSERT_EQ(built.matrix.rows(), 8U);
  EXPECT_EQ(built.matrix.cols(), 93U);
  EXPECT_EQ(built.dropped_rows, 0U);
  const auto& keys = built.matrix.row_keys();
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  EXPECT_EQ(keys.front().company_id, "AAA");
  EXPECT_EQ(keys[4].company_id, "BBB");
}

TEST(BuildMatrixTest, MissingMomentumHistoryIsMasked) {
  auto raw = small_dataset();
  // AAA's prices begin two days before its last t0; earlier rows are too
  // sparse to survive, the last one keeps its fundamentals and changes.
  const std::size_t last = 3;
  ASSERT_EQ(raw.events[last].key(), (market::EventKey{"AAA", {2018, 4}}));
  auto& s = raw.prices.at("AAA");
  market::PriceSeries trimmed("AAA");
  const auto t0 = *raw.calendar.index_of(raw.events[last].t0);
  for (const auto& [d, p] : s.closes()) {
    if (*raw.calendar.index_of(d) + 2 >= t0) trimmed.set(d, p);
  }
  s = trimmed;
  const auto spec = FeatureSpec::defaults();
  const auto m = engineer_features(raw, spec);
  const auto built = build_matrix(raw, spec).matrix;
  const auto& keys = built.row_keys();
  const auto row = static_cast<std::size_t>(std::find(keys.begin(), keys.end(), raw.events[last].key()) - keys.begin());
  ASSERT_LT(row, built.rows());
  for (const char* name : {kRsi9, kRsi30, kMa5Ma50, kMa5Ma200, kMa50Ma200}) {
    const auto c = *m.column_index(name);
    EXPECT_TRUE(m.missing(last, c)) << name;
    EXPECT_TRUE(built.missing(row, c)) << name;
  }
  EXPECT_FALSE(built.missing(row, *built.column_index(kSurprise)));
}

TEST(BuildMatrixTest, SparseRowsAreDropped) {
  auto raw = small_dataset();
  raw.events.front().fundamentals.clear();
  auto spec = FeatureSpec::defaults();
  spec.max_missing_fraction = 0.2;
  const auto built = build_matrix(raw, spec);
  EXPECT_GE(built.dropped_rows, 1U);
  EXPECT_EQ(built.matrix.rows() + built.dropped_rows, raw.events.size());
}

TEST(BuildMatrixTest, StandardizedColumnsPerCompany) {
  synth::SynthConfig sc;
  sc.companies = 6;
  sc.quarters = 12;
  sc.seed = 21;
  const auto raw = synth::generate(sc).data;
  const auto spec = FeatureSpec::defaults();
  const auto built = build_matrix(raw, spec);
  const auto& m = built.matrix;
  ASSERT_GT(m.rows(), 0U);
  for (const auto& name : spec.standardize) {
    const auto c = *m.column_index(name);
    for (std::size_t b = 0; b < m.rows();) {
      std::size_t e = b;
      while (e < m.rows() && m.row_keys()[e].company_id == m.row_keys()[b].company_id) ++e;
      std::vector<double> v;
      for (std::size_t r = b; r < e; ++r) {
        if (!m.missing(r, c)) v.push_back(m.at(r, c));
      }
      if (!v.empty()) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size());
        EXPECT_NEAR(mean, 0.0, 1e-9) << name;
        if (var > 0.0) EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9) << name;
      }
      b = e;
    }
  }
}

TEST(BuildMatrixTest, MatchesWinsorizeThenStandardize) {
  synth::SynthConfig sc;
  sc.companies = 3;
  sc.quarters = 10;
  sc.seed = 4;
  const auto raw = synth::generate(sc).data;
  auto spec = FeatureSpec::defaults();
  spec.winsor_lower = 0.1;
  spec.winsor_upper = 0.9;
  spec.max_missing_fraction = 1.0;
  const auto engineered = engineer_features(raw, spec);
  const auto built = build_matrix(raw, spec).matrix;
  ASSERT_EQ(built.rows(), engineered.rows());
  const auto names = spec.column_names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    const bool std_col = std::find(spec.standardize.begin(), spec.standardize.end(), names[c]) != spec.standardize.end();
    for (std::size_t b = 0; b < built.rows();) {
      std::size_t e = b;
      while (e < built.rows() && built.row_keys()[e].company_id == built.row_keys()[b].company_id) ++e;
      std::vector<double> col;
      for (std::size_t r = b; r < e; ++r) col.push_back(engineered.at(r, c));
      auto expect = winsorize(col, spec.winsor_lower, spec.winsor_upper);
      if (std_col && !present_values(expect).empty()) expect = standardize(expect);
      for (std::size_t r = b; r < e; ++r) {
        const double got = built.at(r, c);
        const double want = expect[r - b];
        if (std::isnan(want)) {
          EXPECT_TRUE(std::isnan(got));
        } else {
          EXPECT_EQ(got, want) << names[c];
        }
      }
      b = e;
    }
  }
}

TEST(BuildMatrixTest, Deterministic) {
  synth::SynthConfig sc;
  sc.companies = 4;
  sc.quarters = 8;
  sc.seed = 8;
  const auto raw = synth::generate(sc).data;
  EXPECT_TRUE(build_matrix(raw, FeatureSpec::defaults()).matrix == build_matrix(raw, FeatureSpec::defaults()).matrix);
}

TEST(FeatureMatrixTest, CsvMarksMissingCells) {
  FeatureMatrix m({{"AAA", {2018, 1}}, {"AAA", {2018, 2}}}, {"x", "y"}, {1.5, kMissing, 2.0, 3.0});
  EXPECT_EQ(m.to_csv(), "company_id,fiscal_quarter,x,y,mask\nAAA,2018Q1,1.5,,01\nAAA,2018Q2,2,3,00\n");
  EXPECT_THROW(FeatureMatrix({{"AAA", {2018, 1}}}, {"x"}, {1.0, 2.0}), std::invalid_argument);
}

}  // namespace
}  // namespace pead::features
