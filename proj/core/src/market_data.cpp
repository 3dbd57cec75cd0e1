#include "pead/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "pead/csv.hpp"
#include "pead/error.hpp"

namespace pead::market {

TradingCalendar::TradingCalendar(std::vector<Date> dates) : dates_(std::move(dates)) {
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    if (!(dates_[i - 1] < dates_[i])) {
      throw DataError("trading calendar not strictly increasing at " + format_date(dates_[i]));
    }
  }
}

std::optional<std::size_t> TradingCalendar::index_of(Date d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dates_.begin());
}

std::size_t TradingCalendar::index_at_or_before(Date d) const {
  auto it = std::upper_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.begin()) throw DataError("no trading day on or before " + format_date(d));
  return static_cast<std::size_t>(it - dates_.begin()) - 1;
}

std::size_t TradingCalendar::index_before(Date d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.begin()) throw DataError("no prior trading day before " + format_date(d));
  return static_cast<std::size_t>(it - dates_.begin()) - 1;
}

void PriceSeries::set(Date d, double close) {
  if (!std::isfinite(close) || close <= 0.0) {
    throw DataError("price for " + id_ + " on " + format_date(d) + " must be positive");
  }
  closes_[d] = close;
}

std::optional<double> PriceSeries::find(Date d) const {
  auto it = closes_.find(d);
  if (it == closes_.end()) return std::nullopt;
  return it->second;
}

std::optional<AnnounceTiming> parse_timing(std::string_view text) {
  if (text == "BMO") return AnnounceTiming::kBeforeOpen;
  if (text == "AMC") return AnnounceTiming::kAfterClose;
  if (text == "INTRA") return AnnounceTiming::kIntraday;
  return std::nullopt;
}

std::string_view timing_code(AnnounceTiming t) {
  switch (t) {
    case AnnounceTiming::kBeforeOpen: return "BMO";
    case AnnounceTiming::kAfterClose: return "AMC";
    case AnnounceTiming::kIntraday: return "INTRA";
  }
  return "AMC";
}

BundlePaths BundlePaths::in_directory(const std::string& dir) {
  const std::filesystem::path p(dir);
  BundlePaths b;
  b.prices = (p / "prices.csv").string();
  b.index = (p / "index.csv").string();
  b.fundamentals = (p / "fundamentals.csv").string();
  const auto si = p / "short_interest.csv";
  if (std::filesystem::exists(si)) b.short_interest = si.string();
  return b;
}

const std::vector<std::string>& fundamentals_fixed_columns() {
  static const std::vector<std::string> cols{"company_id",    "fiscal_quarter", "announce_date", "announce_timing",
                                             "reported_eps",  "consensus_eps",  "sector"};
  return cols;
}

namespace {

std::string where(const csv::Table& t, std::size_t row) {
  return t.source() + " line " + std::to_string(t.line_of(row));
}

void read_index(const csv::Table& t, RawDataset& out) {
  const auto c_date = t.require_column("date");
  const auto c_close = t.require_column("close");
  std::vector<std::pair<Date, double>> rows;
  rows.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    try {
      const auto close = csv::parse_optional_double(t.row(i)[c_close]);
      if (!close) throw DataError("missing close");
      rows.emplace_back(parse_date(t.row(i)[c_date]), *close);
    } catch (const DataError& e) {
      throw DataError(where(t, i) + ": " + e.what());
    }
  }
  std::sort(rows.begin(), rows.end());
  std::vector<Date> dates;
  dates.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first == rows[i - 1].first) {
      throw DataError(t.source() + ": duplicate index date " + format_date(rows[i].first));
    }
    dates.push_back(rows[i].first);
    out.index.set(rows[i].first, rows[i].second);
  }
  out.calendar = TradingCalendar(std::move(dates));
}

void read_prices(const csv::Table& t, RawDataset& out) {
  const auto c_id = t.require_column("company_id");
  const auto c_date = t.require_column("date");
  const auto c_close = t.require_column("close");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& r = t.row(i);
    try {
      if (r[c_id].empty()) throw DataError("missing company_id");
      const Date d = parse_date(r[c_date]);
      if (!out.calendar.contains(d)) throw DataError("date " + format_date(d) + " is not a trading day");
      const auto close = csv::parse_optional_double(r[c_close]);
      if (!close) throw DataError("missing close");
      auto [it, inserted] = out.prices.try_emplace(r[c_id], PriceSeries(r[c_id]));
      if (it->second.find(d)) throw DataError("duplicate price for " + r[c_id] + " on " + format_date(d));
      it->second.set(d, *close);
    } catch (const DataError& e) {
      throw DataError(where(t, i) + ": " + e.what());
    }
  }
}

void read_short_interest(const csv::Table& t, RawDataset& out) {
  const auto c_id = t.require_column("company_id");
  const auto c_date = t.require_column("date");
  const auto c_ratio = t.require_column("ratio");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& r = t.row(i);
    try {
      const auto ratio = csv::parse_optional_double(r[c_ratio]);
      if (!ratio) continue;
      if (*ratio < 0.0) throw DataError("negative short interest ratio");
      out.short_interest[r[c_id]][parse_date(r[c_date])] = *ratio;
    } catch (const DataError& e) {
      throw DataError(where(t, i) + ": " + e.what());
    }
  }
}

std::optional<double> latest_on_or_before(const ShortInterestSeries& s, Date d) {
  auto it = s.upper_bound(d);
  if (it == s.begin()) return std::nullopt;
  return std::prev(it)->second;
}

void read_fundamentals(const csv::Table& t, RawDataset& out) {
  const auto c_id = t.require_column("company_id");
  const auto c_q = t.require_column("fiscal_quarter");
  const auto c_date = t.require_column("announce_date");
  const auto c_timing = t.require_column("announce_timing");
  const auto c_rep = t.require_column("reported_eps");
  const auto c_cons = t.require_column("consensus_eps");
  const auto c_sector = t.column("sector");

  const auto& fixed = fundamentals_fixed_columns();
  std::vector<std::pair<std::size_t, std::string>> metric_cols;
  for (std::size_t c = 0; c < t.header().size(); ++c) {
    if (std::find(fixed.begin(), fixed.end(), t.header()[c]) == fixed.end()) {
      metric_cols.emplace_back(c, t.header()[c]);
    }
  }

  // Uniqueness is a file-level property, checked before any row is dropped.
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& r = t.row(i);
    auto [it, inserted] = seen.emplace(std::make_pair(r[c_id], r[c_q]), t.line_of(i));
    if (!inserted) {
      throw DataError(t.source() + " line " + std::to_string(t.line_of(i)) + ": duplicate event (" + r[c_id] + ", " +
                      r[c_q] + "), first seen on line " + std::to_string(it->second));
    }
  }

  auto drop = [&out](const std::string& reason) {
    ++out.stats.events_dropped;
    ++out.stats.drop_reasons[reason];
  };

  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& r = t.row(i);
    ++out.stats.events_read;
    EarningsEvent ev;
    ev.company_id = r[c_id];
    if (ev.company_id.empty()) {
      drop("missing company_id");
      continue;
    }
    try {
      ev.quarter = FiscalQuarter::parse(r[c_q]);
    } catch (const DataError&) {
      drop("invalid fiscal_quarter");
      continue;
    }
    if (r[c_timing].empty()) {
      drop("missing announce_timing");
      continue;
    }
    const auto timing = parse_timing(r[c_timing]);
    if (!timing) {
      drop("invalid announce_timing");
      continue;
    }
    ev.timing = *timing;
    try {
      ev.announce_date = parse_date(r[c_date]);
    } catch (const DataError&) {
      drop("invalid announce_date");
      continue;
    }
    try {
      const auto rep = csv::parse_optional_double(r[c_rep]);
      const auto cons = csv::parse_optional_double(r[c_cons]);
      if (!rep || !cons) {
        drop("missing eps");
        continue;
      }
      ev.reported_eps = *rep;
      ev.consensus_eps = *cons;
      bool bad_metric = false;
      for (const auto& [col, name] : metric_cols) {
        try {
          if (auto v = csv::parse_optional_double(r[col])) ev.fundamentals.emplace(name, *v);
        } catch (const DataError&) {
          bad_metric = true;
        }
      }
      if (bad_metric) {
        drop("malformed metric value");
        continue;
      }
    } catch (const DataError&) {
      drop("malformed eps");
      continue;
    }
    if (c_sector) ev.sector = r[*c_sector];
    if (!out.prices.contains(ev.company_id)) {
      drop("no price series");
      continue;
    }
    if (out.calendar.empty() || ev.announce_date < out.calendar.front() || ev.announce_date > out.calendar.back()) {
      drop("announce_date outside calendar");
      continue;
    }
    try {
      ev.t0 = resolve_t0(ev.announce_date, ev.timing, out.calendar);
    } catch (const DataError&) {
      drop("no trading day before announcement");
      continue;
    }
    if (auto si = out.short_interest.find(ev.company_id); si != out.short_interest.end()) {
      ev.short_interest_ratio = latest_on_or_before(si->second, ev.t0);
    }
    out.events.push_back(std::move(ev));
  }
  std::sort(out.events.begin(), out.events.end(),
            [](const EarningsEvent& a, const EarningsEvent& b) { return a.key() < b.key(); });
}

}  // namespace

RawDataset ingest(const BundlePaths& paths) {
  RawDataset out;
  read_index(csv::Table::read_file(paths.index), out);
  read_prices(csv::Table::read_file(paths.prices), out);
  if (!paths.short_interest.empty()) read_short_interest(csv::Table::read_file(paths.short_interest), out);
  read_fundamentals(csv::Table::read_file(paths.fundamentals), out);
  return out;
}

Date resolve_t0(Date announce_date, AnnounceTiming timing, const TradingCalendar& calendar) {
  switch (timing) {
    case AnnounceTiming::kAfterClose:
      return calendar.at(calendar.index_at_or_before(announce_date));
    case AnnounceTiming::kBeforeOpen:
    case AnnounceTiming::kIntraday:
      return calendar.at(calendar.index_before(announce_date));
  }
  throw std::logic_error("unhandled announce timing");
}

double abnormal_return(double stock_return, double index_return) {
  if (!std::isfinite(stock_return) || !std::isfinite(index_return)) {
    throw std::invalid_argument("abnormal_return: non-finite input");
  }
  return stock_return - index_return;
}

double cumulative_abnormal_return(const PriceSeries& stock, const PriceSeries& index,
                                  const TradingCalendar& calendar, Date start, int days) {
  if (days < 1) throw std::invalid_argument("CAR horizon must be >= 1");
  const auto i0 = calendar.index_of(start);
  if (!i0) throw CoverageError("CAR start " + format_date(start) + " is not a trading day");
  const std::size_t last = *i0 + static_cast<std::size_t>(days);
  if (last >= calendar.size()) {
    throw CoverageError("CAR window from " + format_date(start) + " needs " + std::to_string(days) +
                        " trading days; calendar ends " + format_date(calendar.back()));
  }
  auto close = [](const PriceSeries& s, Date d) {
    auto v = s.find(d);
    if (!v) throw CoverageError("missing close for " + s.id() + " on " + format_date(d));
    return *v;
  };
  double total = 0.0;
  double prev_s = close(stock, calendar.at(*i0));
  double prev_i = close(index, calendar.at(*i0));
  for (std::size_t k = *i0 + 1; k <= last; ++k) {
    const Date d = calendar.at(k);
    const double s = close(stock, d);
    const double ix = close(index, d);
    total += abnormal_return(s / prev_s - 1.0, ix / prev_i - 1.0);
    prev_s = s;
    prev_i = ix;
  }
  return total;
}

CarLabel car(const PriceSeries& stock, const PriceSeries& index, const TradingCalendar& calendar,
             const EventKey& key, Date t0, int horizon) {
  CarLabel label;
  label.key = key;
  label.t0 = t0;
  label.horizon = horizon;
  label.car = cumulative_abnormal_return(stock, index, calendar, t0, horizon);
  label.direction = label.car >= 0.0 ? 1 : -1;
  return label;
}

void write_bundle(const RawDataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw DataError("cannot write " + (fs::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("index.csv");
    f << "date,close\n";
    for (const auto& [d, c] : data.index.closes()) f << format_date(d) << ',' << csv::format_double(c) << '\n';
  }
  {
    auto f = open("prices.csv");
    f << "company_id,date,close\n";
    for (const auto& [id, series] : data.prices) {
      for (const auto& [d, c] : series.closes()) f << id << ',' << format_date(d) << ',' << csv::format_double(c) << '\n';
    }
  }
  {
    std::set<std::string> metrics;
    for (const auto& ev : data.events) {
      for (const auto& [name, v] : ev.fundamentals) metrics.insert(name);
    }
    auto f = open("fundamentals.csv");
    f << "company_id,fiscal_quarter,announce_date,announce_timing,reported_eps,consensus_eps,sector";
    for (const auto& m : metrics) f << ',' << m;
    f << '\n';
    for (const auto& ev : data.events) {
      f << ev.company_id << ',' << ev.quarter.to_string() << ',' << format_date(ev.announce_date) << ','
        << timing_code(ev.timing) << ',' << csv::format_double(ev.reported_eps) << ','
        << csv::format_double(ev.consensus_eps) << ',' << ev.sector;
      for (const auto& m : metrics) {
        f << ',';
        if (auto it = ev.fundamentals.find(m); it != ev.fundamentals.end()) f << csv::format_double(it->second);
      }
      f << '\n';
    }
  }
  if (!data.short_interest.empty()) {
    auto f = open("short_interest.csv");
    f << "company_id,date,ratio\n";
    for (const auto& [id, series] : data.short_interest) {
      for (const auto& [d, r] : series) f << id << ',' << format_date(d) << ',' << csv::format_double(r) << '\n';
    }
  }
}

}  // namespace pead::market
