#include "pead_cli/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pead/backtest.hpp"
#include "pead/csv.hpp"
#include "pead/error.hpp"
#include "pead/features.hpp"
#include "pead/ga.hpp"
#include "pead/gbt.hpp"
#include "pead/json_io.hpp"
#include "pead/market_data.hpp"
#include "pead/synth.hpp"

namespace pead::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct RunConfig {
  std::string data;
  std::string out = "out";
  std::string model;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  int horizon = 30;
  gbt::LossKind loss = gbt::LossKind::kLogistic;
  features::FeatureSpec features = features::FeatureSpec::defaults();
  gbt::TrainConfig train;
  ga::GaConfig ga;
  ga::SearchSpace search_space = ga::SearchSpace::defaults();
  backtest::Selector selector;
  synth::SynthConfig synth;
  int runs = 100;
  std::size_t window = 0;  // 0: 50 for single-date tests, else 100
  double epsilon = 0.0005;
  backtest::TacticMode tactic_mode = backtest::TacticMode::kKeepOpposite;
  int top_k = 5;
};

json to_json(const RunConfig& c) {
  return json{{"data", c.data},
              {"out", c.out},
              {"model", c.model},
              {"seed", c.seed},
              {"threads", c.threads},
              {"horizon", c.horizon},
              {"loss", std::string(gbt::loss_name(c.loss))},
              {"features", c.features},
              {"train", c.train},
              {"ga", c.ga},
              {"search_space", c.search_space},
              {"selector", c.selector},
              {"synth", c.synth},
              {"backtest",
               {{"runs", c.runs},
                {"window", c.window},
                {"epsilon", c.epsilon},
                {"tactic_mode", std::string(backtest::tactic_mode_name(c.tactic_mode))},
                {"top_k", c.top_k}}}};
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::type_error& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::set<std::string> known{"data",  "out",      "model",        "seed",     "threads",
                                           "horizon", "loss",   "features",     "train",    "ga",
                                           "search_space", "selector", "synth", "backtest"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("config: unknown field '" + key + "'");
  }
  RunConfig c;
  take(j, "data", c.data);
  take(j, "out", c.out);
  take(j, "model", c.model);
  take(j, "seed", c.seed);
  take(j, "threads", c.threads);
  take(j, "horizon", c.horizon);
  if (j.contains("loss")) {
    std::string name;
    take(j, "loss", name);
    c.loss = gbt::parse_loss(name);
  }
  take(j, "features", c.features);
  take(j, "train", c.train);
  take(j, "ga", c.ga);
  take(j, "search_space", c.search_space);
  take(j, "selector", c.selector);
  take(j, "synth", c.synth);
  if (j.contains("backtest")) {
    const auto& b = j.at("backtest");
    if (!b.is_object()) throw ConfigError("config field 'backtest': expected an object");
    for (const auto& [key, value] : b.items()) {
      if (key != "runs" && key != "window" && key != "epsilon" && key != "tactic_mode" && key != "top_k") {
        throw ConfigError("config field 'backtest': unknown key '" + key + "'");
      }
    }
    take(b, "runs", c.runs);
    take(b, "window", c.window);
    take(b, "epsilon", c.epsilon);
    take(b, "top_k", c.top_k);
    if (b.contains("tactic_mode")) {
      std::string name;
      take(b, "tactic_mode", name);
      c.tactic_mode = backtest::parse_tactic_mode(name);
    }
  }
  return c;
}

struct Flags {
  std::string config;
  std::optional<std::string> data, out, model, loss, quarter, date, sector, tactic_mode;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<int> year, runs, horizon, max_generations;
  std::optional<std::size_t> window;
  std::optional<double> epsilon;
};

// Per-field overrides: flags win over the config file.
RunConfig effective_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : from_json(json_io::read_file(f.config));
  if (f.data) c.data = *f.data;
  if (f.out) c.out = *f.out;
  if (f.model) c.model = *f.model;
  if (f.loss) c.loss = gbt::parse_loss(*f.loss);
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.horizon) c.horizon = *f.horizon;
  if (f.runs) c.runs = *f.runs;
  if (f.window) c.window = *f.window;
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.tactic_mode) c.tactic_mode = backtest::parse_tactic_mode(*f.tactic_mode);
  if (f.max_generations) c.ga.max_generations = *f.max_generations;
  if (f.year) c.selector.year = *f.year;
  if (f.quarter) c.selector.quarter = FiscalQuarter::parse(*f.quarter);
  if (f.date) c.selector.date = parse_date(*f.date);
  if (f.sector) c.selector.sector = *f.sector;

  // One global seed drives every stochastic component.
  c.train.seed = c.seed;
  c.ga.seed = c.seed;
  c.synth.seed = c.seed;
  if (c.threads == 0) throw ConfigError("config field 'threads': must be >= 1");
  c.ga.threads = c.threads;
  if (c.horizon < 2) throw ConfigError("config field 'horizon': must be >= 2");
  if (c.runs < 1) throw ConfigError("config field 'backtest.runs': must be >= 1");
  c.train.validate();
  c.ga.validate();
  return c;
}

struct Context {
  RunConfig config;
  std::uint64_t hash = 0;
  std::ostream& out;

  [[nodiscard]] std::string stamp() const {
    std::ostringstream s;
    s << "config_hash=" << std::hex << std::setw(16) << std::setfill('0') << hash << std::dec
      << " seed=" << config.seed;
    return s.str();
  }
  [[nodiscard]] json meta() const {
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << hash;
    return json{{"config_hash", h.str()}, {"seed", config.seed}};
  }
  [[nodiscard]] fs::path out_dir() const {
    fs::path p(config.out);
    fs::create_directories(p);
    return p;
  }
  void write_text(const std::string& name, const std::string& body) const {
    const auto path = out_dir() / name;
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << "# " << stamp() << '\n' << body;
    if (!f) throw ConfigError("write failed for '" + path.string() + "'");
    out << "wrote " << path.string() << '\n';
  }
  void write_json(const std::string& name, json j) const {
    j["meta"] = meta();
    const auto path = out_dir() / name;
    json_io::write_file(j, path.string());
    out << "wrote " << path.string() << '\n';
  }
};

std::uint64_t config_hash(const RunConfig& c) {
  json j = to_json(c);
  // Output location and worker count do not change results.
  j.erase("out");
  j.erase("threads");
  return fnv1a(j.dump());
}

const std::string& require_data(const RunConfig& c) {
  if (c.data.empty()) throw ConfigError("missing input 'data': pass --data <bundle dir> or set it in the config");
  if (!fs::is_directory(c.data)) throw ConfigError("input 'data': '" + c.data + "' is not a directory");
  return c.data;
}

market::RawDataset load_bundle(const RunConfig& c) {
  return market::ingest(market::BundlePaths::in_directory(require_data(c)));
}

bool has_selector(const backtest::Selector& s) { return s.year || s.quarter || s.date; }

std::vector<double> labels_for(const backtest::StudyData& d, std::span<const std::size_t> rows, gbt::LossKind loss) {
  std::vector<double> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(loss == gbt::LossKind::kLogistic ? (d.car[r] >= 0.0 ? 1.0 : 0.0) : d.car[r]);
  return y;
}

// Training rows: the walk-forward train side when a selector is given,
// otherwise every labeled event.
std::vector<std::size_t> training_rows(const backtest::StudyData& d, const RunConfig& c) {
  std::vector<std::size_t> rows;
  if (has_selector(c.selector)) {
    rows = backtest::labeled_only(backtest::walk_forward_split(d.events, c.selector), d).train;
  } else {
    for (std::size_t r = 0; r < d.matrix.rows(); ++r) {
      if (d.labeled(r)) rows.push_back(r);
    }
  }
  if (rows.empty()) throw ConfigError("no labeled training events for selector '" + c.selector.describe() + "'");
  return rows;
}

void prepend_stamp(const fs::path& path, const std::string& stamp) {
  std::ifstream in(path);
  std::stringstream body;
  body << in.rdbuf();
  in.close();
  std::ofstream out(path);
  out << "# " << stamp << '\n' << body.str();
}

int cmd_synth(const Context& ctx) {
  const auto result = synth::generate(ctx.config.synth);
  const auto dir = ctx.out_dir();
  market::write_bundle(result.data, dir.string());
  for (const auto& name : {"prices.csv", "index.csv", "fundamentals.csv", "short_interest.csv"}) {
    if (fs::exists(dir / name)) prepend_stamp(dir / name, ctx.stamp());
  }
  std::ostringstream truth;
  truth << "company_id,fiscal_quarter,signal,noise,car,shock\n";
  for (const auto& [key, p] : result.truth) {
    truth << key.company_id << ',' << key.quarter.to_string() << ',' << csv::format_double(p.signal) << ','
          << csv::format_double(p.noise) << ',' << csv::format_double(p.car) << ',' << csv::format_double(p.shock)
          << '\n';
  }
  ctx.write_text("truth.csv", truth.str());
  ctx.out << "synth: " << result.data.events.size() << " events, " << result.data.prices.size()
          << " companies, signal rms " << result.signal_rms << " -> " << dir.string() << '\n';
  return 0;
}

int cmd_ingest(const Context& ctx) {
  const auto raw = load_bundle(ctx.config);
  std::ostringstream s;
  s << "item,value\n";
  s << "events_read," << raw.stats.events_read << '\n';
  s << "events_kept," << raw.events.size() << '\n';
  s << "events_dropped," << raw.stats.events_dropped << '\n';
  for (const auto& [reason, n] : raw.stats.drop_reasons) s << "dropped:" << reason << ',' << n << '\n';
  s << "companies," << raw.prices.size() << '\n';
  s << "trading_days," << raw.calendar.size() << '\n';
  if (!raw.calendar.empty()) {
    s << "first_day," << format_date(raw.calendar.front()) << '\n';
    s << "last_day," << format_date(raw.calendar.back()) << '\n';
  }
  ctx.write_text("ingest_summary.csv", s.str());
  ctx.out << "ingest: " << raw.events.size() << " of " << raw.stats.events_read << " events kept\n";
  return 0;
}

int cmd_features(const Context& ctx) {
  const auto raw = load_bundle(ctx.config);
  const auto built = features::build_matrix(raw, ctx.config.features);
  ctx.write_text("features.csv", built.matrix.to_csv());
  ctx.out << "features: " << built.matrix.rows() << " rows x " << built.matrix.cols() << " columns, "
          << built.dropped_rows << " sparse rows dropped\n";
  return 0;
}

int cmd_tune(const Context& ctx) {
  const auto& c = ctx.config;
  const auto data = backtest::build_study_data(load_bundle(c), c.features, c.horizon);
  const auto rows = training_rows(data, c);
  const auto matrix = data.matrix.select_rows(rows);
  const auto y = labels_for(data, rows, c.loss);
  const auto result = ga::optimize(matrix, y, c.search_space, c.ga, c.loss, c.train);

  json genes = json::object();
  for (std::size_t k = 0; k < c.search_space.genes.size(); ++k) genes[c.search_space.genes[k].name] = result.best.genes[k];
  ctx.write_json("best.json", json{{"genes", genes},
                                   {"fitness", result.best_fitness},
                                   {"generations", result.history.size()},
                                   {"train", ga::apply(c.train, c.search_space, result.best)}});
  std::ostringstream h;
  h << "generation,best,mean\n";
  for (const auto& g : result.history) {
    h << g.generation << ',' << csv::format_double(g.best) << ',' << csv::format_double(g.mean) << '\n';
  }
  ctx.write_text("history.csv", h.str());
  ctx.out << "tune: best fitness " << result.best_fitness << " after " << result.history.size() << " generations\n";
  return 0;
}

int cmd_train(const Context& ctx) {
  const auto& c = ctx.config;
  const auto data = backtest::build_study_data(load_bundle(c), c.features, c.horizon);
  const auto rows = training_rows(data, c);
  const auto model = gbt::train(data.matrix.select_rows(rows), labels_for(data, rows, c.loss), c.train, c.loss);
  ctx.write_json("model.json", json(model));
  ctx.out << "train: " << model.trees.size() << " trees on " << rows.size() << " events\n";
  return 0;
}

int cmd_predict(const Context& ctx) {
  const auto& c = ctx.config;
  if (c.model.empty()) throw ConfigError("missing input 'model': pass --model <model.json> or set it in the config");
  const auto model = gbt::load(c.model);
  const auto data = backtest::build_study_data(load_bundle(c), c.features, c.horizon);
  if (model.feature_names != data.matrix.column_names()) {
    throw ConfigError("input 'model': feature columns do not match the configured feature spec");
  }
  std::vector<std::size_t> rows;
  if (has_selector(c.selector)) {
    rows = backtest::walk_forward_split(data.events, c.selector).test;
  } else {
    rows.resize(data.matrix.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
  }
  std::ostringstream s;
  s << "company_id,fiscal_quarter,prediction,car\n";
  for (std::size_t r : rows) {
    const auto& key = data.matrix.row_keys()[r];
    s << key.company_id << ',' << key.quarter.to_string() << ',' << csv::format_double(model.predict(data.matrix.row(r)))
      << ',' << csv::format_double(data.car[r]) << '\n';
  }
  ctx.write_text("predictions.csv", s.str());
  ctx.out << "predict: " << rows.size() << " events scored\n";
  return 0;
}

struct Study {
  backtest::StudyData data;
  backtest::SplitPlan plan;
};

Study load_study(const RunConfig& c) {
  if (!has_selector(c.selector)) {
    throw ConfigError("missing input 'selector': pass --year, --quarter or --date");
  }
  Study s{backtest::build_study_data(load_bundle(c), c.features, c.horizon), {}};
  s.plan = backtest::walk_forward_split(s.data.events, c.selector);
  return s;
}

backtest::StudyConfig study_config(const RunConfig& c) {
  return backtest::StudyConfig{c.train, c.runs, c.seed, c.threads};
}

std::size_t window_for(const RunConfig& c) {
  if (c.window > 0) return c.window;
  return c.selector.date ? 50 : 100;
}

int cmd_backtest(const Context& ctx, const std::string& kind) {
  const auto& c = ctx.config;
  const auto study = load_study(c);
  if (kind == "direction") {
    const auto r = backtest::direction_study(study.data, study.plan, study_config(c));
    ctx.write_text("direction.csv", backtest::to_csv(r));
    ctx.write_text("direction_summary.txt", backtest::summary(r) + "\n");
    ctx.out << backtest::summary(r) << '\n';
  } else if (kind == "portfolio" || kind == "quantile") {
    const auto ranked = backtest::predict_test_returns(study.data, study.plan, c.train);
    const auto w = window_for(c);
    if (kind == "portfolio") {
      const auto curve = backtest::moving_portfolio(ranked.predicted, ranked.actual, w);
      ctx.write_text("portfolio.csv", backtest::to_csv(curve));
      std::vector<double> start_rank;
      std::vector<double> ret;
      for (const auto& p : curve.points) {
        start_rank.push_back(static_cast<double>(p.start_rank));
        ret.push_back(p.mean_return);
      }
      ctx.out << "portfolio: " << curve.points.size() << " windows of " << w
              << ", spearman(rank, return) = " << backtest::spearman(start_rank, ret) << '\n';
    } else {
      const auto q = backtest::quantile_stats(ranked.predicted, ranked.actual, w);
      ctx.write_text("quantile.csv", backtest::to_csv(q));
      ctx.out << backtest::summary(q) << '\n';
    }
  } else if (kind == "occurrence") {
    const auto t = backtest::occurrence_study(study.data, study.plan, study_config(c), c.top_k);
    ctx.write_text("occurrence.csv", backtest::to_csv(t));
    ctx.out << backtest::summary(t) << '\n';
  } else if (kind == "tactic") {
    const auto t = backtest::tactic_study(study.data, study.plan, c.train, c.epsilon, c.tactic_mode);
    ctx.write_text("tactic.csv", backtest::to_csv(t));
    ctx.out << backtest::summary(t) << '\n';
  } else {
    throw ConfigError("unknown backtest report '" + kind + "'");
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-earnings drift research pipeline", "pead"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--data", f.data, "Bundle directory");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--model", f.model, "Serialized model (predict)");
  app.add_option("--seed", f.seed, "Global seed");
  app.add_option("--threads", f.threads, "Worker thread cap");
  app.add_option("--loss", f.loss, "logistic or squared_error");
  app.add_option("--horizon", f.horizon, "CAR horizon in trading days");
  app.add_option("--year", f.year, "Test announce year");
  app.add_option("--quarter", f.quarter, "Test fiscal quarter, e.g. 2018Q3");
  app.add_option("--date", f.date, "Test announce date, YYYY-MM-DD");
  app.add_option("--sector", f.sector, "Sector filter");
  app.add_option("--window", f.window, "Portfolio / quantile window");
  app.add_option("--runs", f.runs, "Repeated trainings per study");
  app.add_option("--epsilon", f.epsilon, "Day-one exclusion threshold");
  app.add_option("--tactic-mode", f.tactic_mode, "keep-opposite or drop-opposite");
  app.add_option("--max-generations", f.max_generations, "GA generation cap");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic bundle with a planted signal");
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate and summarize a bundle");
  auto* features_cmd = app.add_subcommand("features", "Write the preprocessed feature matrix");
  auto* tune_cmd = app.add_subcommand("tune", "GA hyperparameter search");
  auto* train_cmd = app.add_subcommand("train", "Fit and serialize an ensemble");
  auto* predict_cmd = app.add_subcommand("predict", "Score events with a saved ensemble");
  auto* backtest_cmd = app.add_subcommand("backtest", "Walk-forward reports");
  std::string report;
  backtest_cmd->add_option("report", report, "direction|portfolio|quantile|occurrence|tactic")
      ->required()
      ->check(CLI::IsMember({"direction", "portfolio", "quantile", "occurrence", "tactic"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    Context ctx{effective_config(f), 0, out};
    ctx.hash = config_hash(ctx.config);
    if (synth_cmd->parsed()) return cmd_synth(ctx);
    if (ingest_cmd->parsed()) return cmd_ingest(ctx);
    if (features_cmd->parsed()) return cmd_features(ctx);
    if (tune_cmd->parsed()) return cmd_tune(ctx);
    if (train_cmd->parsed()) return cmd_train(ctx);
    if (predict_cmd->parsed()) return cmd_predict(ctx);
    if (backtest_cmd->parsed()) return cmd_backtest(ctx, report);
    err << "error: no subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace pead::cli
