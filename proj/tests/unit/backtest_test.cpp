#include "pead/backtest.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "pead/error.hpp"
#include "pead/synth.hpp"

namespace pead::backtest {
namespace {

StudyEvent study_event(const std::string& id, int year, int quarter, const std::string& date, const std::string& sector) {
  StudyEvent e;
  e.key = {id, {year, quarter}};
  e.sector = sector;
  e.announce_date = parse_date(date);
  e.t0 = e.announce_date;
  return e;
}

// Quarterly events for fiscal 2013-2016 over two companies in two sectors,
// announced mid-month after each quarter ends.
std::vector<StudyEvent> four_years() {
  std::vector<StudyEvent> out;
  for (int y = 2013; y <= 2016; ++y) {
    for (int q = 1; q <= 4; ++q) {
      const std::string date = q == 4 ? std::to_string(y + 1) + "-01-15"
                                      : std::to_string(y) + "-" + (q == 3 ? "10" : q == 2 ? "07" : "04") + "-15";
      out.push_back(study_event("AAA", y, q, date, "Financial"));
      out.push_back(study_event("BBB", y, q, date, "Technology"));
    }
  }
  return out;
}

int announce_year(const StudyEvent& e) { return static_cast<int>(std::chrono::year_month_day{e.announce_date}.year()); }

TEST(WalkForwardSplitTest, YearSelector) {
  const auto events = four_years();
  Selector s;
  s.year = 2015;
  const auto plan = walk_forward_split(events, s);
  ASSERT_FALSE(plan.test.empty());
  for (std::size_t i : plan.test) EXPECT_EQ(announce_year(events[i]), 2015);
  Date earliest = events[plan.test.front()].announce_date;
  for (std::size_t i : plan.test) earliest = std::min(earliest, events[i].announce_date);
  for (std::size_t i : plan.train) {
    EXPECT_LT(events[i].announce_date, earliest);
    EXPECT_LE(announce_year(events[i]), 2014);
  }
  std::size_t before = 0;
  for (const auto& e : events) before += e.announce_date < earliest ? 1 : 0;
  EXPECT_EQ(plan.train.size(), before);
  for (std::size_t i : plan.train) EXPECT_EQ(std::count(plan.test.begin(), plan.test.end(), i), 0);
}

TEST(WalkForwardSplitTest, DateSelector) {
  auto events = four_years();
  events.push_back(study_event("CCC", 2018, 3, "2018-10-25", "Energy"));
  events.push_back(study_event("DDD", 2018, 3, "2018-10-25", "Energy"));
  events.push_back(study_event("EEE", 2018, 3, "2018-10-26", "Energy"));
  Selector s;
  s.date = parse_date("2018-10-25");
  const auto plan = walk_forward_split(events, s);
  ASSERT_EQ(plan.test.size(), 2U);
  for (std::size_t i : plan.test) EXPECT_EQ(events[i].announce_date, parse_date("2018-10-25"));
  EXPECT_EQ(plan.train.size(), four_years().size());
}

TEST(WalkForwardSplitTest, SectorRestrictsBothSides) {
  const auto events = four_years();
  Selector s;
  s.year = 2015;
  s.sector = "Financial";
  const auto plan = walk_forward_split(events, s);
  ASSERT_FALSE(plan.train.empty());
  for (std::size_t i : plan.train) EXPECT_EQ(events[i].sector, "Financial");
  for (std::size_t i : plan.test) EXPECT_EQ(events[i].sector, "Financial");
}

TEST(WalkForwardSplitTest, Errors) {
  const auto events = four_years();
  EXPECT_THROW(walk_forward_split(events, Selector{}), ConfigError);
  Selector none;
  none.year = 2030;
  EXPECT_THROW(walk_forward_split(events, none), ConfigError);
}

TEST(DirectionAccuracyTest, Basics) {
  const std::vector<double> a{0.1, -0.2, 0.0, 0.3};
  EXPECT_EQ(direction_accuracy(a, a), 1.0);
  EXPECT_EQ(direction_accuracy(a, std::vector<double>{-1, 1, -1, -1}), 0.0);
  EXPECT_EQ(direction_accuracy(std::vector<double>{0.0}, std::vector<double>{5.0}), 1.0);
  EXPECT_THROW(direction_accuracy(a, std::vector<double>{1}), std::invalid_argument);
}

TEST(SummarizeAccuraciesTest, Aggregates) {
  const auto r = summarize_accuracies({0.5, 0.7, 0.9});
  EXPECT_NEAR(r.mean, 0.7, 1e-15);
  EXPECT_NEAR(r.std, std::sqrt(0.08 / 3.0), 1e-15);
  EXPECT_EQ(r.min, 0.5);
  EXPECT_EQ(r.max, 0.9);
}

TEST(MovingPortfolioTest, Examples) {
  const std::vector<double> actual{5, 4, 3, 2, 1};
  const auto c = moving_portfolio(actual, actual, 3);
  ASSERT_EQ(c.points.size(), 3U);
  EXPECT_EQ(c.points[0].mean_return, 4.0);
  EXPECT_EQ(c.points[1].mean_return, 3.0);
  EXPECT_EQ(c.points[2].mean_return, 2.0);
  EXPECT_EQ(c.points[0].start_rank, 1U);

  const auto flat = moving_portfolio(std::vector<double>{3, 1, 2, 5}, std::vector<double>(4, 0.25), 2);
  for (const auto& p : flat.points) EXPECT_EQ(p.mean_return, 0.25);

  const std::vector<double> reversed{1, 2, 3, 4, 5};
  const auto anti = moving_portfolio(reversed, actual, 2);
  for (std::size_t i = 1; i < anti.points.size(); ++i) EXPECT_GT(anti.points[i].mean_return, anti.points[i - 1].mean_return);

  EXPECT_THROW(moving_portfolio(actual, actual, 6), std::invalid_argument);
}

TEST(MovingPortfolioTest, TiesKeepInputOrder) {
  const auto c = moving_portfolio(std::vector<double>{1, 1, 1}, std::vector<double>{10, 20, 30}, 1);
  EXPECT_EQ(c.points[0].mean_return, 10.0);
  EXPECT_EQ(c.points[2].mean_return, 30.0);
}

TEST(QuantileStatsTest, PerfectRanking) {
  const std::vector<double> a{3, 1, -1, -3};
  const auto q = quantile_stats(a, a, 1);
  EXPECT_EQ(q.top, 3.0);
  EXPECT_EQ(q.average, 0.0);
  EXPECT_EQ(q.bottom, -3.0);
  EXPECT_EQ(q.population, 4U);
  EXPECT_THROW(quantile_stats(a, a, 3), std::invalid_argument);
}

TEST(QuantileStatsTest, RandomPredictionsCentreOnPopulationMean) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.01, 0.05);
  std::vector<double> actual(200);
  for (double& v : actual) v = z(rng);
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / 200.0;
  double top = 0.0;
  double bottom = 0.0;
  std::vector<double> predicted(200);
  for (int trial = 0; trial < 1000; ++trial) {
    for (double& p : predicted) p = z(rng);
    const auto q = quantile_stats(predicted, actual, 20);
    EXPECT_NEAR(q.average, mean, 1e-12);
    top += q.top;
    bottom += q.bottom;
  }
  // Each trial mean has sd about 0.05/sqrt(20); over 1000 trials about 3.5e-4.
  EXPECT_NEAR(top / 1000.0, mean, 0.0015);
  EXPECT_NEAR(bottom / 1000.0, mean, 0.0015);
}

TEST(SpearmanTest, Basics) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
  // Ties take average ranks: x ranks 1.5,1.5,3 against 1,2,3.
  EXPECT_NEAR(spearman(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}), std::sqrt(0.75), 1e-12);
}

TEST(TacticInferTest, SmallMoveIsExcluded) {
  const std::vector<int> pred{1};
  const auto r = tactic_infer(pred, std::vector<double>{0.0003}, std::vector<double>{0.02}, std::vector<double>{0.02},
                              0.0005, TacticMode::kKeepOpposite);
  EXPECT_EQ(r.excluded, 1U);
  EXPECT_EQ(r.kept, 0U);
  EXPECT_FALSE(r.inferred_accuracy.has_value());
}

TEST(TacticInferTest, ModesPartitionSurvivors) {
  const std::vector<int> pred{1, 1, -1, -1, 1};
  const std::vector<double> day1{-0.01, 0.01, 0.02, -0.0001, 0.03};
  const std::vector<double> car0{0.03, 0.02, -0.01, -0.02, -0.01};
  const std::vector<double> car1{0.04, -0.01, -0.03, -0.02, -0.04};
  const auto keep = tactic_infer(pred, day1, car0, car1, 0.0005, TacticMode::kKeepOpposite);
  EXPECT_EQ(keep.population, 5U);
  EXPECT_EQ(keep.excluded, 1U);
  EXPECT_EQ(keep.kept, 2U);
  EXPECT_EQ(keep.filtered_out, 2U);
  ASSERT_TRUE(keep.inferred_accuracy.has_value());
  EXPECT_EQ(*keep.inferred_accuracy, 1.0);
  EXPECT_NEAR(keep.model_accuracy, 0.8, 1e-15);
  EXPECT_NEAR(keep.naive_accuracy, 0.6, 1e-15);

  const auto drop = tactic_infer(pred, day1, car0, car1, 0.0005, TacticMode::kDropOpposite);
  EXPECT_EQ(drop.kept, 2U);
  EXPECT_EQ(drop.filtered_out, 2U);
  EXPECT_EQ(*drop.inferred_accuracy, 0.0);
}

TEST(TacticInferTest, CountIdentityOnRandomInputs) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 0.01);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial);
    std::vector<int> pred(n);
    std::vector<double> d1(n), c0(n), c1(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = z(rng) > 0.0 ? 1 : -1;
      d1[i] = z(rng) * 0.1;
      c0[i] = z(rng);
      c1[i] = z(rng);
    }
    for (auto mode : {TacticMode::kKeepOpposite, TacticMode::kDropOpposite}) {
      const auto r = tactic_infer(pred, d1, c0, c1, 0.0005, mode);
      EXPECT_EQ(r.excluded + r.kept + r.filtered_out, r.population);
      EXPECT_LE(r.kept, r.population);
      if (r.inferred_accuracy) {
        EXPECT_GE(*r.inferred_accuracy, 0.0);
        EXPECT_LE(*r.inferred_accuracy, 1.0);
      }
    }
  }
}

TEST(TacticModeTest, Names) {
  EXPECT_EQ(parse_tactic_mode(tactic_mode_name(TacticMode::kKeepOpposite)), TacticMode::kKeepOpposite);
  EXPECT_EQ(parse_tactic_mode(tactic_mode_name(TacticMode::kDropOpposite)), TacticMode::kDropOpposite);
  EXPECT_THROW(parse_tactic_mode("sideways"), ConfigError);
}

class SynthStudyTest : public ::testing::Test {
 protected:
  static StudyData study(const std::map<std::string, double>& weights, std::uint64_t seed) {
    synth::SynthConfig sc;
    sc.companies = 50;
    sc.quarters = 12;
    sc.weights = weights;
    sc.seed = seed;
    const auto raw = synth::generate(sc).data;
    return build_study_data(raw, features::FeatureSpec::defaults(), 30);
  }
  static SplitPlan year_2017(const StudyData& d) {
    Selector s;
    s.year = 2017;
    return labeled_only(walk_forward_split(d.events, s), d);
  }
};

TEST_F(SynthStudyTest, StudyDataLabelsAreConsistent) {
  const auto d = study({{features::kSurprise, 1.0}}, 3);
  ASSERT_EQ(d.events.size(), d.matrix.rows());
  std::size_t labeled = 0;
  for (std::size_t r = 0; r < d.events.size(); ++r) {
    if (!d.labeled(r)) continue;
    ++labeled;
    EXPECT_NEAR(d.day_one[r] + d.car_after_day_one[r], d.car[r], 1e-12);
  }
  EXPECT_GT(labeled, d.events.size() * 9 / 10);
}

TEST_F(SynthStudyTest, PureNoiseAccuracyNearHalf) {
  const auto d = study({}, 5);
  const auto plan = year_2017(d);
  ASSERT_GE(plan.test.size(), 150U);
  StudyConfig c;
  c.runs = 100;
  c.train.rounds = 30;
  c.train.max_depth = 4;
  c.train.subsample = 0.8;
  c.train.colsample_bytree = 0.8;
  const auto r = direction_study(d, plan, c);
  EXPECT_EQ(r.accuracies.size(), 100U);
  EXPECT_GE(r.mean, 0.40);
  EXPECT_LE(r.mean, 0.60);
  for (double a : r.accuracies) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST_F(SynthStudyTest, PlantedSignalAccuracyHigh) {
  const auto d = study({{features::kSurprise, 1.0}}, 6);
  const auto plan = year_2017(d);
  StudyConfig c;
  c.runs = 3;
  c.train.rounds = 50;
  const auto r = direction_study(d, plan, c);
  EXPECT_GE(r.mean, 0.90);
  EXPECT_EQ(r.test_size, plan.test.size());
}

TEST_F(SynthStudyTest, OccurrenceSingleRunCountsOne) {
  const auto d = study({{features::kSurprise, 1.0}}, 7);
  const auto plan = year_2017(d);
  StudyConfig c;
  c.runs = 1;
  c.train.rounds = 20;
  const auto t = occurrence_study(d, plan, c, 5);
  ASSERT_EQ(t.positions.size(), 5U);
  EXPECT_EQ(t.positions[0].front().first, features::kSurprise);
  for (const auto& pos : t.positions) {
    ASSERT_FALSE(pos.empty());
    EXPECT_EQ(pos.front().second, 1);
  }
}

TEST_F(SynthStudyTest, ErrorsOnEmptyTrainSide) {
  const auto d = study({{features::kSurprise, 1.0}}, 9);
  Selector s;
  s.year = 2015;
  const auto plan = walk_forward_split(d.events, s);
  EXPECT_TRUE(plan.train.empty());
  EXPECT_THROW(direction_study(d, plan, StudyConfig{}), ConfigError);
}

}  // namespace
}  // namespace pead::backtest
