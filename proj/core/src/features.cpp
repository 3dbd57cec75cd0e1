#include "pead/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pead/csv.hpp"
#include "pead/error.hpp"

namespace pead::features {

using market::EarningsEvent;

const std::vector<std::string>& default_base_metrics() {
  // "Total Asset" appears twice in the source table; it is one metric here.
  static const std::vector<std::string> metrics{
      "Cash",
      "Cash_From_Operating_Activities",
      "Cost_Of_Revenue",
      "Current_Ratio",
      "Dividend_Payout_Ratio",
      "Dividend_Yield",
      "Free_Cash_Flow",
      "Gross_Profit",
      "Income_from_Continued_Operations",
      "Inventory_Turnover",
      "Net_Debt_to_EBIT",
      "Net_Income",
      "Operating_Expenses",
      "Operating_Income",
      "Operating_Margin",
      "PB_Ratios",
      "PC_Ratios",
      "PS_Ratios",
      "Quick_Ratio",
      "Return_On_Assets",
      "Return_On_Common_Equity",
      "Revenue",
      "Short_Term_Debt",
      "Total_Asset",
      "Total_Debt_to_Total_Assets",
      "Total_Debt_to_Total_Equity",
      "Total_Inventory",
      "Total_Liabilities",
  };
  return metrics;
}

FeatureSpec FeatureSpec::defaults() {
  FeatureSpec spec;
  for (const auto& m : spec.base_metrics) spec.standardize.push_back(m);
  for (const auto& m : spec.base_metrics) spec.standardize.push_back(m + kQuarterlySuffix);
  for (const auto& m : spec.base_metrics) spec.standardize.push_back(m + kYearlySuffix);
  return spec;
}

std::vector<std::string> FeatureSpec::column_names() const {
  std::vector<std::string> names;
  names.reserve(base_metrics.size() * 3 + 9);
  for (const auto& m : base_metrics) names.push_back(m);
  for (const auto& m : base_metrics) names.push_back(m + kQuarterlySuffix);
  for (const auto& m : base_metrics) names.push_back(m + kYearlySuffix);
  for (const char* n : {kSurprise, kSurprisePrevDiff, kSurpriseAvg3Diff, kRsi9, kRsi30, kMa5Ma50, kMa5Ma200,
                        kMa50Ma200, kShortInterest}) {
    names.emplace_back(n);
  }
  return names;
}

void FeatureSpec::validate() const {
  const auto names = column_names();
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != names.size()) throw ConfigError("feature spec: duplicate feature names");
  if (!(winsor_lower >= 0.0 && winsor_lower < winsor_upper && winsor_upper <= 1.0)) {
    throw ConfigError("feature spec: winsor limits must satisfy 0 <= lower < upper <= 1");
  }
  for (const auto& s : standardize) {
    if (!unique.contains(s)) throw ConfigError("feature spec: standardize entry '" + s + "' is not a feature");
  }
  if (!(max_missing_fraction >= 0.0 && max_missing_fraction <= 1.0)) {
    throw ConfigError("feature spec: max_missing_fraction must lie in [0, 1]");
  }
}

FeatureMatrix::FeatureMatrix(std::vector<market::EventKey> row_keys, std::vector<std::string> column_names,
                             std::vector<double> values)
    : row_keys_(std::move(row_keys)), column_names_(std::move(column_names)), values_(std::move(values)) {
  if (values_.size() != row_keys_.size() * column_names_.size()) {
    throw std::invalid_argument("FeatureMatrix: value count does not match rows x cols");
  }
  for (double v : values_) {
    if (std::isinf(v)) throw std::invalid_argument("FeatureMatrix: non-finite cell");
  }
}

bool FeatureMatrix::missing(std::size_t r, std::size_t c) const { return std::isnan(at(r, c)); }

std::optional<std::size_t> FeatureMatrix::column_index(const std::string& name) const {
  auto it = std::find(column_names_.begin(), column_names_.end(), name);
  if (it == column_names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - column_names_.begin());
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  std::vector<market::EventKey> keys;
  std::vector<double> values;
  keys.reserve(rows.size());
  values.reserve(rows.size() * cols());
  for (std::size_t r : rows) {
    keys.push_back(row_keys_.at(r));
    const auto src = row(r);
    values.insert(values.end(), src.begin(), src.end());
  }
  return FeatureMatrix(std::move(keys), column_names_, std::move(values));
}

FeatureMatrix FeatureMatrix::with_column(const std::string& name, std::span<const double> extra) const {
  if (extra.size() != rows()) throw std::invalid_argument("with_column: length mismatch");
  auto names = column_names_;
  names.push_back(name);
  std::vector<double> values;
  values.reserve(rows() * (cols() + 1));
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto src = row(r);
    values.insert(values.end(), src.begin(), src.end());
    values.push_back(extra[r]);
  }
  return FeatureMatrix(row_keys_, std::move(names), std::move(values));
}

std::string FeatureMatrix::to_csv() const {
  std::ostringstream out;
  out << "company_id,fiscal_quarter";
  for (const auto& n : column_names_) out << ',' << n;
  out << ",mask\n";
  for (std::size_t r = 0; r < rows(); ++r) {
    out << row_keys_[r].company_id << ',' << row_keys_[r].quarter.to_string();
    std::string mask;
    mask.reserve(cols());
    for (std::size_t c = 0; c < cols(); ++c) {
      out << ',' << csv::format_double(at(r, c));
      mask.push_back(missing(r, c) ? '1' : '0');
    }
    out << ',' << mask << '\n';
  }
  return out.str();
}

bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.row_keys_ != b.row_keys_ || a.column_names_ != b.column_names_) return false;
  // Bitwise comparison so that NaN cells compare equal to each other.
  return std::equal(a.values_.begin(), a.values_.end(), b.values_.begin(), b.values_.end(), [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || std::memcmp(&x, &y, sizeof(double)) == 0;
  });
}

std::optional<double> delta_feature(const std::map<FiscalQuarter, double>& series, FiscalQuarter quarter, int lag) {
  auto now = series.find(quarter);
  auto then = series.find(quarter.minus(lag));
  if (now == series.end() || then == series.end()) return std::nullopt;
  return now->second - then->second;
}

SurpriseFeatures surprise_features(std::span<const EarningsEvent> company_events, FiscalQuarter quarter) {
  std::map<FiscalQuarter, double> surprises;
  for (const auto& ev : company_events) surprises.emplace(ev.quarter, ev.surprise());
  SurpriseFeatures out;
  auto now = surprises.find(quarter);
  if (now == surprises.end()) return out;
  out.current = now->second;
  if (auto prev = surprises.find(quarter.minus(1)); prev != surprises.end()) {
    out.diff_previous = now->second - prev->second;
  }
  double sum = 0.0;
  int found = 0;
  for (int lag = 1; lag <= 3; ++lag) {
    if (auto it = surprises.find(quarter.minus(lag)); it != surprises.end()) {
      sum += it->second;
      ++found;
    }
  }
  if (found == 3) out.diff_average3 = now->second - sum / 3.0;
  return out;
}

double rsi(std::span<const double> closes, int period) {
  if (period < 1) throw std::invalid_argument("rsi: period must be >= 1");
  if (closes.size() < static_cast<std::size_t>(period) + 1) {
    throw std::invalid_argument("rsi: need " + std::to_string(period + 1) + " closes, have " +
                                std::to_string(closes.size()));
  }
  double gain = 0.0;
  double loss = 0.0;
  for (std::size_t i = closes.size() - static_cast<std::size_t>(period); i < closes.size(); ++i) {
    const double change = closes[i] - closes[i - 1];
    if (change > 0.0) {
      gain += change;
    } else {
      loss -= change;
    }
  }
  if (gain == 0.0 && loss == 0.0) return 50.0;
  if (loss == 0.0) return 100.0;
  if (gain == 0.0) return 0.0;
  const double rs = (gain / period) / (loss / period);
  return 100.0 - 100.0 / (1.0 + rs);
}

double ma_ratio(std::span<const double> closes, int short_window, int long_window) {
  if (short_window < 1 || long_window <= short_window) {
    throw std::invalid_argument("ma_ratio: need 1 <= short window < long window");
  }
  if (closes.size() < static_cast<std::size_t>(long_window)) {
    throw std::invalid_argument("ma_ratio: need " + std::to_string(long_window) + " closes, have " +
                                std::to_string(closes.size()));
  }
  auto tail_mean = [&closes](int w) {
    const auto tail = closes.last(static_cast<std::size_t>(w));
    return std::accumulate(tail.begin(), tail.end(), 0.0) / w;
  };
  return tail_mean(short_window) / tail_mean(long_window);
}

namespace {

// 1-based nearest rank ceil(q * n), clamped to [1, n].
std::size_t nearest_rank(double q, std::size_t n) {
  const double raw = std::ceil(q * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(raw < 1.0 ? 1 : static_cast<std::size_t>(raw), 1, n);
}

}  // namespace

std::vector<double> winsorize(std::span<const double> values, double lower_q, double upper_q) {
  if (!(lower_q >= 0.0 && lower_q < upper_q && upper_q <= 1.0)) {
    throw std::invalid_argument("winsorize: need 0 <= lower < upper <= 1");
  }
  std::vector<double> present;
  present.reserve(values.size());
  for (double v : values) {
    if (!std::isnan(v)) present.push_back(v);
  }
  std::vector<double> out(values.begin(), values.end());
  if (present.empty()) return out;
  std::sort(present.begin(), present.end());
  const double lo = present[nearest_rank(lower_q, present.size()) - 1];
  const double hi = present[nearest_rank(upper_q, present.size()) - 1];
  for (double& v : out) {
    if (!std::isnan(v)) v = std::clamp(v, lo, hi);
  }
  return out;
}

std::vector<double> standardize(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("standardize: no non-missing values");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) {
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  // Relative threshold: a constant column leaves only rounding noise in sd.
  const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out) {
    if (!std::isnan(v)) v = degenerate ? 0.0 : (v - mean) / sd;
  }
  return out;
}

namespace {

constexpr int kMaxHistory = 200;

// Closes of the company through t0 (inclusive), oldest first; stops at the
// first gap in the series.
std::vector<double> closes_through(const market::RawDataset& raw, const std::string& company, Date t0) {
  std::vector<double> out;
  auto series = raw.prices.find(company);
  auto idx = raw.calendar.index_of(t0);
  if (series == raw.prices.end() || !idx) return out;
  for (std::size_t k = *idx + 1; k-- > 0 && out.size() < static_cast<std::size_t>(kMaxHistory) + 1;) {
    auto c = series->second.find(raw.calendar.at(k));
    if (!c) break;
    out.push_back(*c);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

double opt(const std::optional<double>& v) { return v ? *v : kMissing; }

}  // namespace

std::vector<double> event_features(const market::RawDataset& raw, std::span<const EarningsEvent> company_events,
                                   std::size_t event_index, const FeatureSpec& spec) {
  const EarningsEvent& ev = company_events[event_index];
  const std::size_t m = spec.base_metrics.size();
  std::vector<double> row(m * 3 + 9, kMissing);

  for (std::size_t j = 0; j < m; ++j) {
    const auto& name = spec.base_metrics[j];
    std::map<FiscalQuarter, double> series;
    for (const auto& e : company_events) {
      if (auto it = e.fundamentals.find(name); it != e.fundamentals.end()) series.emplace(e.quarter, it->second);
    }
    if (auto it = ev.fundamentals.find(name); it != ev.fundamentals.end()) row[j] = it->second;
    row[m + j] = opt(delta_feature(series, ev.quarter, 1));
    row[2 * m + j] = opt(delta_feature(series, ev.quarter, 4));
  }

  const auto s = surprise_features(company_events, ev.quarter);
  std::size_t c = 3 * m;
  row[c++] = opt(s.current);
  row[c++] = opt(s.diff_previous);
  row[c++] = opt(s.diff_average3);

  const auto closes = closes_through(raw, ev.company_id, ev.t0);
  auto guarded = [&closes](auto&& f, std::size_t need) { return closes.size() >= need ? f() : kMissing; };
  row[c++] = guarded([&] { return rsi(closes, 9); }, 10);
  row[c++] = guarded([&] { return rsi(closes, 30); }, 31);
  row[c++] = guarded([&] { return ma_ratio(closes, 5, 50); }, 50);
  row[c++] = guarded([&] { return ma_ratio(closes, 5, 200); }, 200);
  row[c++] = guarded([&] { return ma_ratio(closes, 50, 200); }, 200);
  row[c++] = opt(ev.short_interest_ratio);
  return row;
}

namespace {

// [begin, end) ranges of events per company; events are sorted by key.
std::vector<std::pair<std::size_t, std::size_t>> company_ranges(const std::vector<EarningsEvent>& events) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < events.size();) {
    std::size_t j = i;
    while (j < events.size() && events[j].company_id == events[i].company_id) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

}  // namespace

FeatureMatrix engineer_features(const market::RawDataset& raw, const FeatureSpec& spec) {
  spec.validate();
  std::vector<market::EventKey> keys;
  std::vector<double> values;
  for (auto [b, e] : company_ranges(raw.events)) {
    const std::span<const EarningsEvent> company(raw.events.data() + b, e - b);
    for (std::size_t i = 0; i < company.size(); ++i) {
      keys.push_back(company[i].key());
      auto row = event_features(raw, company, i, spec);
      values.insert(values.end(), row.begin(), row.end());
    }
  }
  return FeatureMatrix(std::move(keys), spec.column_names(), std::move(values));
}

BuildResult build_matrix(const market::RawDataset& raw, const FeatureSpec& spec) {
  spec.validate();
  const auto names = spec.column_names();
  const std::size_t n = names.size();
  std::vector<bool> standardized(n, false);
  for (const auto& s : spec.standardize) {
    standardized[static_cast<std::size_t>(std::find(names.begin(), names.end(), s) - names.begin())] = true;
  }

  BuildResult result;
  std::vector<market::EventKey> keys;
  std::vector<double> values;
  for (auto [b, e] : company_ranges(raw.events)) {
    const std::span<const EarningsEvent> company(raw.events.data() + b, e - b);
    std::vector<std::vector<double>> rows;
    std::vector<market::EventKey> company_keys;
    for (std::size_t i = 0; i < company.size(); ++i) {
      auto row = event_features(raw, company, i, spec);
      const auto missing = static_cast<double>(std::count_if(row.begin(), row.end(), [](double v) {
        return std::isnan(v);
      }));
      if (missing > spec.max_missing_fraction * static_cast<double>(n)) {
        ++result.dropped_rows;
        continue;
      }
      rows.push_back(std::move(row));
      company_keys.push_back(company[i].key());
    }
    if (rows.empty()) continue;

    std::vector<double> column(rows.size());
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t r = 0; r < rows.size(); ++r) column[r] = rows[r][c];
      auto processed = winsorize(column, spec.winsor_lower, spec.winsor_upper);
      const bool any = std::any_of(processed.begin(), processed.end(), [](double v) { return !std::isnan(v); });
      if (standardized[c] && any) processed = standardize(processed);
      for (std::size_t r = 0; r < rows.size(); ++r) rows[r][c] = processed[r];
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      keys.push_back(company_keys[r]);
      values.insert(values.end(), rows[r].begin(), rows[r].end());
    }
  }
  result.matrix = FeatureMatrix(std::move(keys), names, std::move(values));
  return result;
}

}  // namespace pead::features
