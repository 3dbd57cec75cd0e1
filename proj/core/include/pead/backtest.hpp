#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pead/features.hpp"
#include "pead/gbt.hpp"
#include "pead/market_data.hpp"

namespace pead::backtest {

struct StudyEvent {
  market::EventKey key;
  std::string sector;
  Date announce_date;
  Date t0;
};

/// Preprocessed matrix plus per-row event metadata and realized returns.
/// Return fields are NaN when the price history does not cover the window.
struct StudyData {
  features::FeatureMatrix matrix;
  std::vector<StudyEvent> events;
  std::vector<double> car;                // t0 -> t0 + horizon
  std::vector<double> day_one;            // t0 -> t1 abnormal return
  std::vector<double> car_after_day_one;  // t1 -> t0 + horizon
  int horizon = 30;
  std::size_t dropped_rows = 0;

  [[nodiscard]] bool labeled(std::size_t row) const;
};

StudyData build_study_data(const market::RawDataset& raw, const features::FeatureSpec& spec, int horizon = 30);

/// +1 for x >= 0, -1 otherwise.
inline int direction_of(double x) { return x >= 0.0 ? 1 : -1; }

/// Test-period selector; all given fields must match. At least one of
/// year (announce year), quarter (fiscal quarter) or date is required.
struct Selector {
  std::optional<int> year;
  std::optional<FiscalQuarter> quarter;
  std::optional<Date> date;
  std::optional<std::string> sector;

  [[nodiscard]] std::string describe() const;
};

struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Test = events matching the selector; train = events (restricted to the
/// sector, if given) announced strictly before the earliest test event.
SplitPlan walk_forward_split(std::span<const StudyEvent> events, const Selector& selector);

/// Keeps only rows with realized labels.
SplitPlan labeled_only(const SplitPlan& plan, const StudyData& data);

struct StudyConfig {
  gbt::TrainConfig train;
  int runs = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct DirectionReport {
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // population std over runs
  double min = 0.0;
  double max = 0.0;
};

DirectionReport summarize_accuracies(std::vector<double> accuracies);

/// Fraction of positions where the signs agree (zero counts as positive).
double direction_accuracy(std::span<const double> predicted, std::span<const double> actual);

/// Trains a direction classifier per run (seed = config.seed + run) and
/// scores sign accuracy on the test rows.
DirectionReport direction_study(const StudyData& data, const SplitPlan& plan, const StudyConfig& config);

struct PortfolioPoint {
  std::size_t start_rank = 0;  // 1-based
  double mean_return = 0.0;
};

struct PortfolioCurve {
  std::size_t window = 0;
  std::vector<PortfolioPoint> points;
};

/// Ranks by predicted value descending (ties keep input order) and
/// averages actual returns over each window of w consecutive ranks.
PortfolioCurve moving_portfolio(std::span<const double> predicted, std::span<const double> actual, std::size_t w);

struct QuantileReport {
  std::size_t window = 0;
  std::size_t population = 0;
  double top = 0.0;
  double average = 0.0;
  double bottom = 0.0;
};

QuantileReport quantile_stats(std::span<const double> predicted, std::span<const double> actual, std::size_t w);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct RankedTest {
  std::vector<std::size_t> rows;  // test rows, in data order
  std::vector<double> predicted;
  std::vector<double> actual;
};

/// Fits a CAR regressor on the train rows and predicts the test rows.
RankedTest predict_test_returns(const StudyData& data, const SplitPlan& plan, const gbt::TrainConfig& config);

struct OccurrenceTable {
  int runs = 0;
  /// positions[p] = up to three (feature, count) pairs for rank p + 1,
  /// counts descending, ties by feature name.
  std::vector<std::vector<std::pair<std::string, int>>> positions;
};

/// Tallies which features occupy each of the top_k importance ranks over
/// repeated trainings. Features with zero importance are never ranked.
OccurrenceTable occurrence_study(const StudyData& data, const SplitPlan& plan, const StudyConfig& config,
                                 int top_k = 5);

enum class TacticMode { kKeepOpposite, kDropOpposite };

std::string_view tactic_mode_name(TacticMode m);
TacticMode parse_tactic_mode(std::string_view name);

struct TacticReport {
  std::size_t population = 0;
  std::size_t excluded = 0;      // weak day-one response
  std::size_t kept = 0;          // after filtering
  std::size_t filtered_out = 0;  // survivors not retained by the mode
  double model_accuracy = 0.0;   // t0 -> t30 over the population
  std::optional<double> inferred_accuracy;  // t1 -> t30 over kept events
  double naive_accuracy = 0.0;   // t0 -> t30 predictions vs t1 -> t30 signs, unfiltered
};

/// Delayed-entry inference: exclude |day-one move| <= epsilon, retain
/// events by agreement between the day-one move and the predicted
/// direction (mode), and infer t1 -> t30 = predicted direction.
TacticReport tactic_infer(std::span<const int> predicted_direction, std::span<const double> day_one_move,
                          std::span<const double> car_t0, std::span<const double> car_t1, double epsilon,
                          TacticMode mode);

inline constexpr const char* kDayOneFeature = "Day_One_Direction";

/// Retrains the direction classifier with the day-one direction as an
/// extra feature, then applies tactic_infer to the test rows.
TacticReport tactic_study(const StudyData& data, const SplitPlan& plan, const gbt::TrainConfig& config,
                          double epsilon = 0.0005, TacticMode mode = TacticMode::kKeepOpposite);

// CSV and text renderings.
std::string to_csv(const DirectionReport& r);
std::string to_csv(const PortfolioCurve& c);
std::string to_csv(const QuantileReport& q);
std::string to_csv(const OccurrenceTable& t);
std::string to_csv(const TacticReport& t);
std::string summary(const DirectionReport& r);
std::string summary(const QuantileReport& q);
std::string summary(const OccurrenceTable& t);
std::string summary(const TacticReport& t);

}  // namespace pead::backtest
