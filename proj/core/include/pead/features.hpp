#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pead/market_data.hpp"

namespace pead::features {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Engineered column names.
inline constexpr const char* kSurprise = "EPS_EarningsSurprise";
inline constexpr const char* kSurprisePrevDiff = "EPS_Earnings_Surprise_Backward_Diff";
inline constexpr const char* kSurpriseAvg3Diff = "EPS_Earnings_Surprise_Backward_Ave_Diff";
inline constexpr const char* kRsi9 = "RSI_9";
inline constexpr const char* kRsi30 = "RSI_30";
inline constexpr const char* kMa5Ma50 = "MA5_MA50";
inline constexpr const char* kMa5Ma200 = "MA5_MA200";
inline constexpr const char* kMa50Ma200 = "MA50_MA200";
inline constexpr const char* kShortInterest = "Short_Interest_Ratio";
inline constexpr const char* kQuarterlySuffix = "_Q_Change";
inline constexpr const char* kYearlySuffix = "_Y_Change";

/// The earnings-report metrics used as base features.
const std::vector<std::string>& default_base_metrics();

struct FeatureSpec {
  std::vector<std::string> base_metrics = default_base_metrics();
  double winsor_lower = 0.01;
  double winsor_upper = 0.99;
  /// Columns standardized within each company.
  std::vector<std::string> standardize;
  /// Rows with a larger fraction of missing cells are dropped.
  double max_missing_fraction = 0.5;

  /// Default spec: standardizes the base metrics and their changes.
  static FeatureSpec defaults();

  /// Base metrics, then quarterly changes, yearly changes, surprise,
  /// momentum and short-interest columns.
  [[nodiscard]] std::vector<std::string> column_names() const;
  /// Throws ConfigError on duplicate names, bad limits or unknown
  /// standardize entries.
  void validate() const;
};

/// Dense row-major feature matrix; NaN marks a missing cell.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::vector<market::EventKey> row_keys, std::vector<std::string> column_names,
                std::vector<double> values);

  [[nodiscard]] std::size_t rows() const { return row_keys_.size(); }
  [[nodiscard]] std::size_t cols() const { return column_names_.size(); }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  [[nodiscard]] bool missing(std::size_t r, std::size_t c) const;
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }
  [[nodiscard]] const std::vector<market::EventKey>& row_keys() const { return row_keys_; }
  [[nodiscard]] const std::vector<std::string>& column_names() const { return column_names_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] std::optional<std::size_t> column_index(const std::string& name) const;

  [[nodiscard]] FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
  /// Copy with one extra column appended.
  [[nodiscard]] FeatureMatrix with_column(const std::string& name, std::span<const double> values) const;

  /// CSV: company_id, fiscal_quarter, one column per feature (blank when
  /// missing), then a `mask` column of '0'/'1' characters (1 = missing).
  [[nodiscard]] std::string to_csv() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&);

 private:
  std::vector<market::EventKey> row_keys_;
  std::vector<std::string> column_names_;
  std::vector<double> values_;
};

/// value(q) - value(q - lag quarters), or nullopt when either is absent.
std::optional<double> delta_feature(const std::map<FiscalQuarter, double>& series, FiscalQuarter quarter, int lag);

struct SurpriseFeatures {
  std::optional<double> current;
  std::optional<double> diff_previous;
  std::optional<double> diff_average3;
};

/// Surprise of `quarter` and its differences against the previous quarter
/// and the mean of the three preceding quarters. `company_events` holds
/// the events of a single company.
SurpriseFeatures surprise_features(std::span<const market::EarningsEvent> company_events, FiscalQuarter quarter);

/// Relative strength index over the last `period` one-day changes, using
/// simple averages. Needs period + 1 closes; throws std::invalid_argument.
double rsi(std::span<const double> closes, int period);

/// Mean of the last short_window closes over mean of the last long_window.
double ma_ratio(std::span<const double> closes, int short_window, int long_window);

/// Clamps non-missing values into nearest-rank percentiles [P_lower, P_upper].
std::vector<double> winsorize(std::span<const double> values, double lower_q, double upper_q);

/// (x - mean) / population std over non-missing values; zero-variance
/// input maps to zeros. Throws std::invalid_argument if nothing is present.
std::vector<double> standardize(std::span<const double> values);

/// Engineered feature row for one event, in spec.column_names() order.
/// `company_events` are the events of the event's company.
std::vector<double> event_features(const market::RawDataset& raw, std::span<const market::EarningsEvent> company_events,
                                   std::size_t event_index, const FeatureSpec& spec);

/// Engineered features for every event, before any preprocessing.
FeatureMatrix engineer_features(const market::RawDataset& raw, const FeatureSpec& spec);

struct BuildResult {
  FeatureMatrix matrix;
  std::size_t dropped_rows = 0;
};

/// Per company: engineer features, drop overly sparse rows, winsorize
/// every column, standardize the configured columns; then stack
/// companies in (company, quarter) order.
BuildResult build_matrix(const market::RawDataset& raw, const FeatureSpec& spec);

}  // namespace pead::features
