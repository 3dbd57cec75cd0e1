#include "pead/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <span>

#include "pead/error.hpp"

namespace pead::synth {

std::string_view drift_timing_name(DriftTiming t) { return t == DriftTiming::kFromT0 ? "from-t0" : "from-t1"; }

DriftTiming parse_drift_timing(std::string_view name) {
  if (name == "from-t0") return DriftTiming::kFromT0;
  if (name == "from-t1") return DriftTiming::kFromT1;
  throw ConfigError("unknown drift timing '" + std::string(name) + "' (expected from-t0 or from-t1)");
}

void SynthConfig::validate() const {
  if (companies < 2) throw ConfigError("synth config: companies must be >= 2");
  if (quarters < 1) throw ConfigError("synth config: quarters must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("synth config: noise_std must be >= 0");
  if (!(shock_std >= 0.0)) throw ConfigError("synth config: shock_std must be >= 0");
  if (!(surprise_min >= 0.0 && surprise_min <= surprise_max)) {
    throw ConfigError("synth config: need 0 <= surprise_min <= surprise_max");
  }
  if (horizon < 2 || horizon > 60) throw ConfigError("synth config: horizon must lie in [2, 60]");
  const auto names = features::FeatureSpec::defaults().column_names();
  const std::set<std::string> known(names.begin(), names.end());
  for (const auto& [name, w] : weights) {
    if (!known.contains(name)) throw ConfigError("synth config: weight on unknown feature '" + name + "'");
  }
}

namespace {

using namespace std::chrono;

constexpr std::array<const char*, 9> kSectors{"Industrial", "Basic Materials", "Consumer Cyclical",
                                              "Consumer Non-Cyclical", "Financial", "Technology",
                                              "Communications", "Energy", "Utilities"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b));
}

Date quarter_end(FiscalQuarter q) {
  return Date{year{q.year} / month{static_cast<unsigned>(q.quarter * 3)} / last};
}

bool is_weekday(Date d) {
  const weekday w{d};
  return w != Saturday && w != Sunday;
}

Date next_weekday(Date d) {
  while (!is_weekday(d)) d += days{1};
  return d;
}

market::TradingCalendar business_days(Date from, Date to) {
  std::vector<Date> out;
  for (Date d = from; d <= to; d += days{1}) {
    if (is_weekday(d)) out.push_back(d);
  }
  return market::TradingCalendar(std::move(out));
}

const std::vector<std::string>& metric_names() { return features::default_base_metrics(); }

}  // namespace

SynthResult generate(const SynthConfig& config) {
  config.validate();
  const FiscalQuarter last_q = config.first_quarter.minus(-(config.quarters - 1));
  const Date start = quarter_end(config.first_quarter) - days{520};
  const Date end = quarter_end(last_q) + days{45 + 30 + 2 * config.horizon};

  SynthResult result;
  auto& data = result.data;
  data.calendar = business_days(start, end);
  const auto& cal = data.calendar;
  const std::size_t n_days = cal.size();

  {
    auto rng = stream(config.seed, 0xA11CE);
    std::normal_distribution<double> ret(0.0003, config.index_vol);
    double close = 2000.0;
    data.index.set(cal.at(0), close);
    for (std::size_t d = 1; d < n_days; ++d) {
      close *= 1.0 + ret(rng);
      data.index.set(cal.at(d), close);
    }
  }

  const auto spec = features::FeatureSpec::defaults();
  const auto columns = spec.column_names();
  double signal_ss = 0.0;
  std::size_t signal_n = 0;

  for (int c = 0; c < config.companies; ++c) {
    auto rng = stream(config.seed, 1 + static_cast<std::uint64_t>(c));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    char id_buf[16];
    std::snprintf(id_buf, sizeof(id_buf), "%04d", c);
    const std::string id = config.id_prefix + id_buf;
    const std::string sector = kSectors[static_cast<std::size_t>(c) % kSectors.size()];

    // Short interest, roughly twice a month.
    auto& si = data.short_interest[id];
    for (std::size_t d = 0; d < n_days; d += 10) si[cal.at(d)] = 1.0 + 5.0 * unit(rng);

    // Fundamentals follow per-company random walks.
    std::vector<double> level(metric_names().size());
    for (double& v : level) v = 100.0 * std::exp(normal(rng));
    double eps_level = 0.5 + 2.5 * unit(rng);

    std::vector<market::EarningsEvent> events;
    for (int q = 0; q < config.quarters; ++q) {
      market::EarningsEvent ev;
      ev.company_id = id;
      ev.sector = sector;
      ev.quarter = config.first_quarter.minus(-q);
      ev.announce_date = next_weekday(quarter_end(ev.quarter) + days{25 + static_cast<int>(unit(rng) * 20.0)});
      const double t = unit(rng);
      ev.timing = t < 0.45   ? market::AnnounceTiming::kBeforeOpen
                  : t < 0.9 ? market::AnnounceTiming::kAfterClose
                            : market::AnnounceTiming::kIntraday;
      for (std::size_t j = 0; j < level.size(); ++j) {
        level[j] *= 1.0 + 0.01 + 0.05 * normal(rng);
        ev.fundamentals.emplace(metric_names()[j], level[j]);
      }
      eps_level += 0.05 * normal(rng);
      const double magnitude = config.surprise_min + (config.surprise_max - config.surprise_min) * unit(rng);
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      ev.consensus_eps = eps_level;
      ev.reported_eps = eps_level + sign * magnitude;
      ev.t0 = market::resolve_t0(ev.announce_date, ev.timing, cal);
      auto it = si.upper_bound(ev.t0);
      if (it != si.begin()) ev.short_interest_ratio = std::prev(it)->second;
      events.push_back(std::move(ev));
    }

    std::vector<std::size_t> t0_index;
    for (const auto& ev : events) t0_index.push_back(*cal.index_of(ev.t0));

    std::vector<double> idio(n_days);
    for (double& v : idio) v = config.idiosyncratic_vol * normal(rng);
    const double first_close = 20.0 + 180.0 * unit(rng);

    // Scratch dataset holding this company's prices as they are built, so
    // planted features see exactly the history through t0.
    market::RawDataset scratch;
    scratch.calendar = cal;
    auto& series = scratch.prices.emplace(id, market::PriceSeries(id)).first->second;

    std::vector<double> scheduled(n_days, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> closes(n_days);
    closes[0] = first_close;
    series.set(cal.at(0), first_close);
    std::size_t next_event = 0;
    const auto h = static_cast<std::size_t>(config.horizon);
    for (std::size_t d = 1; d < n_days; ++d) {
      while (next_event < events.size() && t0_index[next_event] + 1 == d) {
        const std::size_t k = next_event++;
        const auto row = features::event_features(scratch, events, k, spec);
        PlantedEvent planted;
        for (const auto& [name, w] : config.weights) {
          const auto col = static_cast<std::size_t>(std::find(columns.begin(), columns.end(), name) - columns.begin());
          const double v = row[col];
          planted.feature_values[name] = v;
          if (!std::isnan(v)) planted.signal += w * v;
        }
        auto ev_rng = stream(config.seed, 1 + static_cast<std::uint64_t>(c), 1000 + k);
        std::normal_distribution<double> z(0.0, 1.0);
        planted.noise = config.noise_std * z(ev_rng);
        planted.car = planted.signal + planted.noise;

        std::size_t first_day = t0_index[k] + 1;
        double drift_total = planted.car;
        if (config.timing == DriftTiming::kFromT1) {
          planted.shock = config.shock_std * z(ev_rng);
          scheduled[first_day] = planted.shock;
          drift_total -= planted.shock;
          ++first_day;
        }
        const std::size_t span_days = t0_index[k] + h + 1 - first_day;
        std::vector<double> wiggle(span_days);
        double wiggle_mean = 0.0;
        for (double& w : wiggle) {
          w = config.idiosyncratic_vol * z(ev_rng);
          wiggle_mean += w;
        }
        wiggle_mean /= static_cast<double>(span_days);
        for (std::size_t i = 0; i < span_days; ++i) {
          scheduled[first_day + i] = drift_total / static_cast<double>(span_days) + (wiggle[i] - wiggle_mean);
        }
        signal_ss += planted.signal * planted.signal;
        ++signal_n;
        result.truth.emplace(events[k].key(), std::move(planted));
      }
      const double ar = std::isnan(scheduled[d]) ? idio[d] : scheduled[d];
      const double r_index = *data.index.find(cal.at(d)) / *data.index.find(cal.at(d - 1)) - 1.0;
      closes[d] = closes[d - 1] * (1.0 + r_index + ar);
      series.set(cal.at(d), closes[d]);
    }
    data.prices.emplace(id, std::move(series));
    for (auto& ev : events) data.events.push_back(std::move(ev));
    data.stats.events_read += static_cast<std::size_t>(config.quarters);
  }

  std::sort(data.events.begin(), data.events.end(),
            [](const market::EarningsEvent& a, const market::EarningsEvent& b) { return a.key() < b.key(); });
  result.signal_rms = signal_n ? std::sqrt(signal_ss / static_cast<double>(signal_n)) : 0.0;
  return result;
}

}  // namespace pead::synth
