#include "pead/backtest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pead/csv.hpp"
#include "pead/error.hpp"
#include "pead/parallel.hpp"

namespace pead::backtest {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

bool StudyData::labeled(std::size_t row) const {
  return std::isfinite(car[row]) && std::isfinite(day_one[row]) && std::isfinite(car_after_day_one[row]);
}

StudyData build_study_data(const market::RawDataset& raw, const features::FeatureSpec& spec, int horizon) {
  if (horizon < 2) throw std::invalid_argument("build_study_data: horizon must be >= 2");
  auto built = features::build_matrix(raw, spec);
  StudyData out;
  out.horizon = horizon;
  out.dropped_rows = built.dropped_rows;
  out.matrix = std::move(built.matrix);

  std::map<market::EventKey, const market::EarningsEvent*> by_key;
  for (const auto& ev : raw.events) by_key.emplace(ev.key(), &ev);

  const std::size_t n = out.matrix.rows();
  out.events.reserve(n);
  out.car.assign(n, kNaN);
  out.day_one.assign(n, kNaN);
  out.car_after_day_one.assign(n, kNaN);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& ev = *by_key.at(out.matrix.row_keys()[r]);
    out.events.push_back({ev.key(), ev.sector, ev.announce_date, ev.t0});
    const auto& stock = raw.prices.at(ev.company_id);
    try {
      out.car[r] = market::cumulative_abnormal_return(stock, raw.index, raw.calendar, ev.t0, horizon);
      out.day_one[r] = market::cumulative_abnormal_return(stock, raw.index, raw.calendar, ev.t0, 1);
      const Date t1 = raw.calendar.at(*raw.calendar.index_of(ev.t0) + 1);
      out.car_after_day_one[r] = market::cumulative_abnormal_return(stock, raw.index, raw.calendar, t1, horizon - 1);
    } catch (const CoverageError&) {
      out.car[r] = out.day_one[r] = out.car_after_day_one[r] = kNaN;
    }
  }
  return out;
}

std::string Selector::describe() const {
  std::string s;
  auto add = [&s](const std::string& part) { s += (s.empty() ? "" : " ") + part; };
  if (year) add("year=" + std::to_string(*year));
  if (quarter) add("quarter=" + quarter->to_string());
  if (date) add("date=" + format_date(*date));
  if (sector) add("sector=" + *sector);
  return s;
}

SplitPlan walk_forward_split(std::span<const StudyEvent> events, const Selector& selector) {
  if (!selector.year && !selector.quarter && !selector.date) {
    throw ConfigError("split selector needs a year, quarter or date");
  }
  auto in_sector = [&](const StudyEvent& e) { return !selector.sector || e.sector == *selector.sector; };
  auto in_test = [&](const StudyEvent& e) {
    if (!in_sector(e)) return false;
    if (selector.year && static_cast<int>(std::chrono::year_month_day{e.announce_date}.year()) != *selector.year) {
      return false;
    }
    if (selector.quarter && e.key.quarter != *selector.quarter) return false;
    if (selector.date && e.announce_date != *selector.date) return false;
    return true;
  };
  SplitPlan plan;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (in_test(events[i])) plan.test.push_back(i);
  }
  if (plan.test.empty()) throw ConfigError("split selector '" + selector.describe() + "' matches no events");
  Date earliest = events[plan.test.front()].announce_date;
  for (std::size_t i : plan.test) earliest = std::min(earliest, events[i].announce_date);
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (in_sector(events[i]) && events[i].announce_date < earliest) plan.train.push_back(i);
  }
  return plan;
}

SplitPlan labeled_only(const SplitPlan& plan, const StudyData& data) {
  SplitPlan out;
  std::copy_if(plan.train.begin(), plan.train.end(), std::back_inserter(out.train),
               [&](std::size_t r) { return data.labeled(r); });
  std::copy_if(plan.test.begin(), plan.test.end(), std::back_inserter(out.test),
               [&](std::size_t r) { return data.labeled(r); });
  return out;
}

DirectionReport summarize_accuracies(std::vector<double> accuracies) {
  DirectionReport r;
  r.accuracies = std::move(accuracies);
  if (r.accuracies.empty()) return r;
  const double n = static_cast<double>(r.accuracies.size());
  r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(ss / n);
  auto [lo, hi] = std::minmax_element(r.accuracies.begin(), r.accuracies.end());
  r.min = *lo;
  r.max = *hi;
  return r;
}

double direction_accuracy(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw std::invalid_argument("direction_accuracy: need equal, non-empty sequences");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (direction_of(predicted[i]) == direction_of(actual[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

namespace {

struct TrainTest {
  features::FeatureMatrix train;
  features::FeatureMatrix test;
  std::vector<double> train_car;
  std::vector<double> test_car;
};

TrainTest slice(const StudyData& data, const SplitPlan& raw_plan) {
  const SplitPlan plan = labeled_only(raw_plan, data);
  if (plan.train.empty()) throw ConfigError("walk-forward split has no labeled training events");
  if (plan.test.empty()) throw ConfigError("walk-forward split has no labeled test events");
  TrainTest tt{data.matrix.select_rows(plan.train), data.matrix.select_rows(plan.test), {}, {}};
  for (std::size_t r : plan.train) tt.train_car.push_back(data.car[r]);
  for (std::size_t r : plan.test) tt.test_car.push_back(data.car[r]);
  return tt;
}

std::vector<double> up_labels(std::span<const double> car) {
  std::vector<double> y(car.size());
  for (std::size_t i = 0; i < car.size(); ++i) y[i] = car[i] >= 0.0 ? 1.0 : 0.0;
  return y;
}

}  // namespace

DirectionReport direction_study(const StudyData& data, const SplitPlan& plan, const StudyConfig& config) {
  if (config.runs < 1) throw std::invalid_argument("direction_study: runs must be >= 1");
  const auto tt = slice(data, plan);
  const auto x = gbt::ColumnMatrix::from(tt.train);
  const auto y = up_labels(tt.train_car);
  std::vector<double> acc(static_cast<std::size_t>(config.runs));
  parallel_for(acc.size(), config.threads, [&](std::size_t run) {
    auto c = config.train;
    c.seed = config.seed + run;
    const auto model = gbt::train(x, tt.train.column_names(), y, c, gbt::LossKind::kLogistic);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tt.test.rows(); ++i) {
      const int predicted = model.predict(tt.test.row(i)) >= 0.5 ? 1 : -1;
      if (predicted == direction_of(tt.test_car[i])) ++hits;
    }
    acc[run] = static_cast<double>(hits) / static_cast<double>(tt.test.rows());
  });
  auto report = summarize_accuracies(std::move(acc));
  report.train_size = tt.train.rows();
  report.test_size = tt.test.rows();
  return report;
}

namespace {

std::vector<std::size_t> rank_descending(std::span<const double> predicted) {
  std::vector<std::size_t> order(predicted.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
  return order;
}

double mean_of(std::span<const double> actual, std::span<const std::size_t> order, std::size_t from, std::size_t w) {
  double s = 0.0;
  for (std::size_t k = from; k < from + w; ++k) s += actual[order[k]];
  return s / static_cast<double>(w);
}

}  // namespace

PortfolioCurve moving_portfolio(std::span<const double> predicted, std::span<const double> actual, std::size_t w) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("moving_portfolio: length mismatch");
  if (w < 1 || actual.size() < w) {
    throw std::invalid_argument("moving_portfolio: need at least w = " + std::to_string(w) + " events, have " +
                                std::to_string(actual.size()));
  }
  const auto order = rank_descending(predicted);
  PortfolioCurve curve;
  curve.window = w;
  for (std::size_t i = 0; i + w <= order.size(); ++i) curve.points.push_back({i + 1, mean_of(actual, order, i, w)});
  return curve;
}

QuantileReport quantile_stats(std::span<const double> predicted, std::span<const double> actual, std::size_t w) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("quantile_stats: length mismatch");
  if (w < 1 || actual.size() < 2 * w) {
    throw std::invalid_argument("quantile_stats: need at least 2w = " + std::to_string(2 * w) + " events, have " +
                                std::to_string(actual.size()));
  }
  const auto order = rank_descending(predicted);
  QuantileReport q;
  q.window = w;
  q.population = actual.size();
  q.top = mean_of(actual, order, 0, w);
  q.bottom = mean_of(actual, order, order.size() - w, w);
  q.average = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  return q;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal sequences, n >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

RankedTest predict_test_returns(const StudyData& data, const SplitPlan& plan, const gbt::TrainConfig& config) {
  const auto tt = slice(data, plan);
  const auto model = gbt::train(tt.train, tt.train_car, config, gbt::LossKind::kSquaredError);
  RankedTest out;
  out.rows = labeled_only(plan, data).test;
  out.predicted = model.predict(tt.test);
  out.actual = tt.test_car;
  return out;
}

OccurrenceTable occurrence_study(const StudyData& data, const SplitPlan& plan, const StudyConfig& config, int top_k) {
  if (config.runs < 1 || top_k < 1) throw std::invalid_argument("occurrence_study: runs and top_k must be >= 1");
  const auto tt = slice(data, plan);
  const auto x = gbt::ColumnMatrix::from(tt.train);
  const auto y = up_labels(tt.train_car);
  const auto& names = tt.train.column_names();
  std::vector<std::vector<std::size_t>> ranked(static_cast<std::size_t>(config.runs));
  parallel_for(ranked.size(), config.threads, [&](std::size_t run) {
    auto c = config.train;
    c.seed = config.seed + run;
    const auto model = gbt::train(x, names, y, c, gbt::LossKind::kLogistic);
    const auto imp = model.importance();
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t f = 0; f < names.size(); ++f) {
      const double g = imp.at(names[f]);
      if (g > 0.0) scored.emplace_back(g, f);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t p = 0; p < scored.size() && p < static_cast<std::size_t>(top_k); ++p) {
      ranked[run].push_back(scored[p].second);
    }
  });

  OccurrenceTable table;
  table.runs = config.runs;
  table.positions.resize(static_cast<std::size_t>(top_k));
  for (std::size_t p = 0; p < table.positions.size(); ++p) {
    std::map<std::string, int> counts;
    for (const auto& r : ranked) {
      if (p < r.size()) ++counts[names[r[p]]];
    }
    std::vector<std::pair<std::string, int>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (sorted.size() > 3) sorted.resize(3);
    table.positions[p] = std::move(sorted);
  }
  return table;
}

std::string_view tactic_mode_name(TacticMode m) {
  return m == TacticMode::kKeepOpposite ? "keep-opposite" : "drop-opposite";
}

TacticMode parse_tactic_mode(std::string_view name) {
  if (name == "keep-opposite") return TacticMode::kKeepOpposite;
  if (name == "drop-opposite") return TacticMode::kDropOpposite;
  throw ConfigError("unknown tactic mode '" + std::string(name) + "' (expected keep-opposite or drop-opposite)");
}

TacticReport tactic_infer(std::span<const int> predicted_direction, std::span<const double> day_one_move,
                          std::span<const double> car_t0, std::span<const double> car_t1, double epsilon,
                          TacticMode mode) {
  const std::size_t n = predicted_direction.size();
  if (day_one_move.size() != n || car_t0.size() != n || car_t1.size() != n) {
    throw std::invalid_argument("tactic_infer: length mismatch");
  }
  if (!(epsilon >= 0.0)) throw std::invalid_argument("tactic_infer: epsilon must be >= 0");
  TacticReport r;
  r.population = n;
  std::size_t model_hits = 0;
  std::size_t naive_hits = 0;
  std::size_t inferred_hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int predicted = predicted_direction[i];
    if (predicted == direction_of(car_t0[i])) ++model_hits;
    if (predicted == direction_of(car_t1[i])) ++naive_hits;
    if (std::abs(day_one_move[i]) <= epsilon) {
      ++r.excluded;
      continue;
    }
    const bool opposite = direction_of(day_one_move[i]) != predicted;
    const bool keep = mode == TacticMode::kKeepOpposite ? opposite : !opposite;
    if (!keep) {
      ++r.filtered_out;
      continue;
    }
    ++r.kept;
    if (predicted == direction_of(car_t1[i])) ++inferred_hits;
  }
  if (n > 0) {
    r.model_accuracy = static_cast<double>(model_hits) / static_cast<double>(n);
    r.naive_accuracy = static_cast<double>(naive_hits) / static_cast<double>(n);
  }
  if (r.kept > 0) r.inferred_accuracy = static_cast<double>(inferred_hits) / static_cast<double>(r.kept);
  return r;
}

TacticReport tactic_study(const StudyData& data, const SplitPlan& plan, const gbt::TrainConfig& config,
                          double epsilon, TacticMode mode) {
  std::vector<double> day_one_dir(data.matrix.rows());
  for (std::size_t r = 0; r < day_one_dir.size(); ++r) {
    day_one_dir[r] = std::isfinite(data.day_one[r]) ? static_cast<double>(direction_of(data.day_one[r])) : kNaN;
  }
  StudyData augmented = data;
  augmented.matrix = data.matrix.with_column(kDayOneFeature, day_one_dir);
  const auto tt = slice(augmented, plan);
  const auto model = gbt::train(tt.train, up_labels(tt.train_car), config, gbt::LossKind::kLogistic);
  const auto test_rows = labeled_only(plan, data).test;
  std::vector<int> predicted;
  std::vector<double> move;
  std::vector<double> car0;
  std::vector<double> car1;
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    const std::size_t r = test_rows[i];
    predicted.push_back(model.predict(tt.test.row(i)) >= 0.5 ? 1 : -1);
    move.push_back(data.day_one[r]);
    car0.push_back(data.car[r]);
    car1.push_back(data.car_after_day_one[r]);
  }
  return tactic_infer(predicted, move, car0, car1, epsilon, mode);
}

std::string to_csv(const DirectionReport& r) {
  std::ostringstream out;
  out << "run,accuracy\n";
  for (std::size_t i = 0; i < r.accuracies.size(); ++i) out << i << ',' << csv::format_double(r.accuracies[i]) << '\n';
  return out.str();
}

std::string to_csv(const PortfolioCurve& c) {
  std::ostringstream out;
  out << "rank,return\n";
  for (const auto& p : c.points) out << p.start_rank << ',' << csv::format_double(p.mean_return) << '\n';
  return out.str();
}

std::string to_csv(const QuantileReport& q) {
  std::ostringstream out;
  out << "window,population,top,average,bottom\n"
      << q.window << ',' << q.population << ',' << csv::format_double(q.top) << ','
      << csv::format_double(q.average) << ',' << csv::format_double(q.bottom) << '\n';
  return out.str();
}

std::string to_csv(const OccurrenceTable& t) {
  std::ostringstream out;
  out << "position,place,feature,count,runs\n";
  for (std::size_t p = 0; p < t.positions.size(); ++p) {
    for (std::size_t k = 0; k < t.positions[p].size(); ++k) {
      out << 'F' << p + 1 << ',' << k + 1 << ',' << t.positions[p][k].first << ',' << t.positions[p][k].second << ','
          << t.runs << '\n';
    }
  }
  return out.str();
}

std::string to_csv(const TacticReport& t) {
  std::ostringstream out;
  out << "population,excluded,kept,filtered_out,model_accuracy,inferred_accuracy,naive_accuracy\n"
      << t.population << ',' << t.excluded << ',' << t.kept << ',' << t.filtered_out << ','
      << csv::format_double(t.model_accuracy) << ','
      << (t.inferred_accuracy ? csv::format_double(*t.inferred_accuracy) : std::string{}) << ','
      << csv::format_double(t.naive_accuracy) << '\n';
  return out.str();
}

namespace {
std::string pct(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << 100.0 * v << '%';
  return s.str();
}
}  // namespace

std::string summary(const DirectionReport& r) {
  std::ostringstream out;
  out << "direction study: " << r.accuracies.size() << " runs, train " << r.train_size << ", test " << r.test_size
      << "\n  accuracy mean " << pct(r.mean) << ", std " << pct(r.std) << ", min " << pct(r.min) << ", max "
      << pct(r.max) << '\n';
  return out.str();
}

std::string summary(const QuantileReport& q) {
  std::ostringstream out;
  out << "quantile study: window " << q.window << ", population " << q.population << "\n  top " << pct(q.top)
      << ", average " << pct(q.average) << ", bottom " << pct(q.bottom) << '\n';
  return out.str();
}

std::string summary(const OccurrenceTable& t) {
  std::ostringstream out;
  out << "feature occurrence over " << t.runs << " runs\n";
  for (std::size_t p = 0; p < t.positions.size(); ++p) {
    out << "  F" << p + 1 << ':';
    for (const auto& [name, count] : t.positions[p]) out << ' ' << name << " (" << count << ')';
    out << '\n';
  }
  return out.str();
}

std::string summary(const TacticReport& t) {
  std::ostringstream out;
  out << "delayed-entry tactic: before filtering " << t.population << ", after filtering " << t.kept << " (excluded "
      << t.excluded << ", filtered out " << t.filtered_out << ")\n  model t0->t30 accuracy " << pct(t.model_accuracy)
      << ", inferred t1->t30 accuracy "
      << (t.inferred_accuracy ? pct(*t.inferred_accuracy) : std::string("undefined (no survivors)"))
      << ", naive t1->t30 accuracy " << pct(t.naive_accuracy) << '\n';
  return out.str();
}

}  // namespace pead::backtest
