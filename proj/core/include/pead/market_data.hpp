#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pead/dates.hpp"

namespace pead::market {

/// Ordered trading dates. Offsets ("n-th trading day after") are indices.
class TradingCalendar {
 public:
  TradingCalendar() = default;
  /// Throws DataError unless dates are strictly increasing.
  explicit TradingCalendar(std::vector<Date> dates);

  [[nodiscard]] std::size_t size() const { return dates_.size(); }
  [[nodiscard]] bool empty() const { return dates_.empty(); }
  [[nodiscard]] Date at(std::size_t i) const { return dates_.at(i); }
  [[nodiscard]] Date front() const { return dates_.front(); }
  [[nodiscard]] Date back() const { return dates_.back(); }
  [[nodiscard]] const std::vector<Date>& dates() const { return dates_; }

  [[nodiscard]] std::optional<std::size_t> index_of(Date d) const;
  [[nodiscard]] bool contains(Date d) const { return index_of(d).has_value(); }
  /// Last trading day <= d. Throws DataError if d precedes the calendar.
  [[nodiscard]] std::size_t index_at_or_before(Date d) const;
  /// Last trading day < d. Throws DataError if none exists.
  [[nodiscard]] std::size_t index_before(Date d) const;

 private:
  std::vector<Date> dates_;
};

/// Close prices keyed by trading date; prices are strictly positive.
class PriceSeries {
 public:
  PriceSeries() = default;
  explicit PriceSeries(std::string id) : id_(std::move(id)) {}

  [[nodiscard]] const std::string& id() const { return id_; }
  /// Throws DataError for non-positive or non-finite prices.
  void set(Date d, double close);
  [[nodiscard]] std::optional<double> find(Date d) const;
  [[nodiscard]] std::size_t size() const { return closes_.size(); }
  [[nodiscard]] const std::map<Date, double>& closes() const { return closes_; }

 private:
  std::string id_;
  std::map<Date, double> closes_;
};

enum class AnnounceTiming { kBeforeOpen, kAfterClose, kIntraday };

/// BMO / AMC / INTRA.
std::optional<AnnounceTiming> parse_timing(std::string_view text);
std::string_view timing_code(AnnounceTiming t);

struct EventKey {
  std::string company_id;
  FiscalQuarter quarter;

  [[nodiscard]] std::string to_string() const { return company_id + ":" + quarter.to_string(); }
  friend auto operator<=>(const EventKey&, const EventKey&) = default;
  friend bool operator==(const EventKey&, const EventKey&) = default;
};

struct EarningsEvent {
  std::string company_id;
  std::string sector;
  FiscalQuarter quarter;
  Date announce_date;
  AnnounceTiming timing = AnnounceTiming::kAfterClose;
  double reported_eps = 0.0;
  double consensus_eps = 0.0;
  /// Metric name -> value. An absent key means the metric is missing.
  std::map<std::string, double> fundamentals;
  std::optional<double> short_interest_ratio;
  /// Forecast start day resolved from announce date and timing.
  Date t0;

  [[nodiscard]] EventKey key() const { return {company_id, quarter}; }
  [[nodiscard]] double surprise() const { return reported_eps - consensus_eps; }
};

struct CarLabel {
  EventKey key;
  Date t0;
  int horizon = 30;
  double car = 0.0;
  int direction = 1;
};

/// Short-interest observations for one company, keyed by date.
using ShortInterestSeries = std::map<Date, double>;

struct IngestStats {
  std::size_t events_read = 0;
  std::size_t events_dropped = 0;
  /// Reason -> count.
  std::map<std::string, std::size_t> drop_reasons;
};

struct RawDataset {
  TradingCalendar calendar;
  std::map<std::string, PriceSeries> prices;
  PriceSeries index{"INDEX"};
  /// Sorted by (company_id, quarter).
  std::vector<EarningsEvent> events;
  std::map<std::string, ShortInterestSeries> short_interest;
  IngestStats stats;
};

struct BundlePaths {
  std::string prices;
  std::string index;
  std::string fundamentals;
  /// Optional; empty means no short-interest data.
  std::string short_interest;

  /// Conventional file names inside a bundle directory.
  static BundlePaths in_directory(const std::string& dir);
};

/// Column names in fundamentals.csv that are not metric columns.
const std::vector<std::string>& fundamentals_fixed_columns();

/// Reads and validates a CSV bundle. The index file defines the trading
/// calendar. Invalid events are dropped and counted; structural problems
/// (unreadable file, bad header, duplicate event key) throw DataError.
RawDataset ingest(const BundlePaths& paths);

/// Trading day whose close is the last tradable price before the release.
Date resolve_t0(Date announce_date, AnnounceTiming timing, const TradingCalendar& calendar);

/// Stock return minus the index return. Throws std::invalid_argument on
/// non-finite input.
double abnormal_return(double stock_return, double index_return);

/// Cumulative abnormal return over the `days` trading days following
/// `start` (exclusive): sum of daily (stock - index) simple returns.
/// Throws CoverageError naming the first missing date.
double cumulative_abnormal_return(const PriceSeries& stock, const PriceSeries& index,
                                  const TradingCalendar& calendar, Date start, int days);

/// CAR label with direction = sign(car), zero counted as positive.
CarLabel car(const PriceSeries& stock, const PriceSeries& index, const TradingCalendar& calendar,
             const EventKey& key, Date t0, int horizon = 30);

/// Writes a bundle in the ingest format (used by synth and round-trip tests).
void write_bundle(const RawDataset& data, const std::string& dir);

}  // namespace pead::market
