#include "pead/json_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "pead/error.hpp"

using nlohmann::json;

namespace pead {
namespace {

void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  require_object(j, what);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const char* what) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const FiscalQuarter& q) { j = q.to_string(); }

void from_json(const json& j, FiscalQuarter& q) {
  if (!j.is_string()) throw ConfigError("fiscal quarter: expected a string like 2018Q3");
  try {
    q = FiscalQuarter::parse(j.get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("fiscal quarter: ") + e.what());
  }
}

namespace features {

void to_json(json& j, const FeatureSpec& s) {
  j = json{{"base_metrics", s.base_metrics},
           {"winsor_lower", s.winsor_lower},
           {"winsor_upper", s.winsor_upper},
           {"standardize", s.standardize},
           {"max_missing_fraction", s.max_missing_fraction}};
}

void from_json(const json& j, FeatureSpec& s) {
  constexpr const char* what = "feature spec";
  check_keys(j, {"base_metrics", "winsor_lower", "winsor_upper", "standardize", "max_missing_fraction"}, what);
  s = FeatureSpec::defaults();
  const bool custom_base = j.contains("base_metrics");
  read(j, "base_metrics", s.base_metrics, what);
  read(j, "winsor_lower", s.winsor_lower, what);
  read(j, "winsor_upper", s.winsor_upper, what);
  if (custom_base && !j.contains("standardize")) {
    // Keep the default rule (base metrics and their changes) for the new base set.
    s.standardize.clear();
    for (const auto& m : s.base_metrics) s.standardize.push_back(m);
    for (const auto& m : s.base_metrics) s.standardize.push_back(m + kQuarterlySuffix);
    for (const auto& m : s.base_metrics) s.standardize.push_back(m + kYearlySuffix);
  }
  read(j, "standardize", s.standardize, what);
  read(j, "max_missing_fraction", s.max_missing_fraction, what);
  s.validate();
}

}  // namespace features

namespace gbt {

void to_json(json& j, const TrainConfig& c) {
  j = json{{"gamma", c.gamma},
           {"lambda", c.lambda},
           {"max_depth", c.max_depth},
           {"subsample", c.subsample},
           {"learning_rate", c.learning_rate},
           {"min_child_weight", c.min_child_weight},
           {"colsample_bytree", c.colsample_bytree},
           {"rounds", c.rounds},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  constexpr const char* what = "train config";
  check_keys(j,
             {"gamma", "lambda", "max_depth", "subsample", "learning_rate", "min_child_weight", "colsample_bytree",
              "rounds", "seed"},
             what);
  read(j, "gamma", c.gamma, what);
  read(j, "lambda", c.lambda, what);
  read(j, "max_depth", c.max_depth, what);
  read(j, "subsample", c.subsample, what);
  read(j, "learning_rate", c.learning_rate, what);
  read(j, "min_child_weight", c.min_child_weight, what);
  read(j, "colsample_bytree", c.colsample_bytree, what);
  read(j, "rounds", c.rounds, what);
  read(j, "seed", c.seed, what);
  c.validate();
}

void to_json(json& j, const Ensemble& m) {
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes()) {
      nodes.push_back(json{{"feature", n.feature},
                           {"threshold", n.threshold},
                           {"default_left", n.default_left},
                           {"left", n.left},
                           {"right", n.right},
                           {"weight", n.weight},
                           {"gain", n.gain},
                           {"sum_grad", n.sum_grad},
                           {"sum_hess", n.sum_hess},
                           {"count", n.count}});
    }
    trees.push_back(std::move(nodes));
  }
  j = json{{"format", "pead-gbt"},
           {"version", 1},
           {"loss", std::string(loss_name(m.loss))},
           {"base_score", m.base_score},
           {"learning_rate", m.learning_rate},
           {"feature_names", m.feature_names},
           {"trees", std::move(trees)}};
}

void from_json(const json& j, Ensemble& m) {
  try {
    if (j.at("format").get<std::string>() != "pead-gbt") throw ConfigError("model: unrecognized format");
    if (j.at("version").get<int>() != 1) throw ConfigError("model: unsupported version");
    m.loss = parse_loss(j.at("loss").get<std::string>());
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.trees.clear();
    const auto width = static_cast<int>(m.feature_names.size());
    for (const auto& t : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& n : t) {
        TreeNode node;
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.default_left = n.at("default_left").get<bool>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        node.weight = n.at("weight").get<double>();
        node.gain = n.at("gain").get<double>();
        node.sum_grad = n.at("sum_grad").get<double>();
        node.sum_hess = n.at("sum_hess").get<double>();
        node.count = n.at("count").get<std::size_t>();
        nodes.push_back(node);
      }
      const auto size = static_cast<int>(nodes.size());
      if (size == 0) throw ConfigError("model: empty tree");
      for (const auto& node : nodes) {
        if (node.is_leaf()) continue;
        if (node.feature >= width || node.left <= 0 || node.right <= 0 || node.left >= size || node.right >= size) {
          throw ConfigError("model: corrupt tree node");
        }
      }
      m.trees.emplace_back(std::move(nodes));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

std::string to_json_string(const Ensemble& model) { return json(model).dump(1); }

Ensemble ensemble_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return j.get<Ensemble>();
}

void save(const Ensemble& model, const std::string& path) { json_io::write_file(json(model), path); }

Ensemble load(const std::string& path) { return json_io::read_file(path).get<Ensemble>(); }

}  // namespace gbt

namespace ga {

void to_json(json& j, const GeneRange& g) {
  j = json{{"name", g.name}, {"min", g.min}, {"max", g.max}, {"step", g.step}};
}

void from_json(const json& j, GeneRange& g) {
  constexpr const char* what = "gene range";
  check_keys(j, {"name", "min", "max", "step"}, what);
  if (!j.contains("name")) throw ConfigError("gene range: missing 'name'");
  read(j, "name", g.name, what);
  read(j, "min", g.min, what);
  read(j, "max", g.max, what);
  read(j, "step", g.step, what);
}

void to_json(json& j, const SearchSpace& s) { j = s.genes; }

void from_json(const json& j, SearchSpace& s) {
  if (!j.is_array()) throw ConfigError("search space: expected an array of gene ranges");
  s.genes = j.get<std::vector<GeneRange>>();
  s.validate();
}

void to_json(json& j, const GaConfig& c) {
  j = json{{"population", c.population},     {"survivors", c.survivors},
           {"mutation_probability", c.mutation_probability}, {"tolerance", c.tolerance},
           {"patience", c.patience},         {"max_generations", c.max_generations}, {"folds", c.folds},
           {"seed", c.seed},                 {"threads", c.threads}};
}

void from_json(const json& j, GaConfig& c) {
  constexpr const char* what = "ga config";
  check_keys(j,
             {"population", "survivors", "mutation_probability", "tolerance", "patience", "max_generations", "folds",
              "seed", "threads"},
             what);
  read(j, "population", c.population, what);
  read(j, "survivors", c.survivors, what);
  read(j, "mutation_probability", c.mutation_probability, what);
  read(j, "tolerance", c.tolerance, what);
  read(j, "patience", c.patience, what);
  read(j, "max_generations", c.max_generations, what);
  read(j, "folds", c.folds, what);
  read(j, "seed", c.seed, what);
  read(j, "threads", c.threads, what);
  c.validate();
}

}  // namespace ga

namespace synth {

void to_json(json& j, const SynthConfig& c) {
  j = json{{"companies", c.companies},
           {"quarters", c.quarters},
           {"first_quarter", c.first_quarter},
           {"weights", c.weights},
           {"noise_std", c.noise_std},
           {"timing", std::string(drift_timing_name(c.timing))},
           {"shock_std", c.shock_std},
           {"surprise_min", c.surprise_min},
           {"surprise_max", c.surprise_max},
           {"idiosyncratic_vol", c.idiosyncratic_vol},
           {"index_vol", c.index_vol},
           {"horizon", c.horizon},
           {"id_prefix", c.id_prefix},
           {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  constexpr const char* what = "synth config";
  check_keys(j,
             {"companies", "quarters", "first_quarter", "weights", "noise_std", "timing", "shock_std",
              "surprise_min", "surprise_max", "idiosyncratic_vol", "index_vol", "horizon", "id_prefix", "seed"},
             what);
  read(j, "companies", c.companies, what);
  read(j, "quarters", c.quarters, what);
  if (j.contains("first_quarter")) c.first_quarter = j.at("first_quarter").get<FiscalQuarter>();
  read(j, "weights", c.weights, what);
  read(j, "noise_std", c.noise_std, what);
  if (j.contains("timing")) {
    std::string name;
    read(j, "timing", name, what);
    c.timing = parse_drift_timing(name);
  }
  read(j, "shock_std", c.shock_std, what);
  read(j, "surprise_min", c.surprise_min, what);
  read(j, "surprise_max", c.surprise_max, what);
  read(j, "idiosyncratic_vol", c.idiosyncratic_vol, what);
  read(j, "index_vol", c.index_vol, what);
  read(j, "horizon", c.horizon, what);
  read(j, "id_prefix", c.id_prefix, what);
  read(j, "seed", c.seed, what);
  c.validate();
}

}  // namespace synth

namespace backtest {

void to_json(json& j, const Selector& s) {
  j = json::object();
  if (s.year) j["year"] = *s.year;
  if (s.quarter) j["quarter"] = *s.quarter;
  if (s.date) j["date"] = format_date(*s.date);
  if (s.sector) j["sector"] = *s.sector;
}

void from_json(const json& j, Selector& s) {
  constexpr const char* what = "selector";
  check_keys(j, {"year", "quarter", "date", "sector"}, what);
  s = Selector{};
  if (j.contains("year")) {
    int y = 0;
    read(j, "year", y, what);
    s.year = y;
  }
  if (j.contains("quarter")) s.quarter = j.at("quarter").get<FiscalQuarter>();
  if (j.contains("date")) {
    std::string d;
    read(j, "date", d, what);
    try {
      s.date = parse_date(d);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("selector: ") + e.what());
    }
  }
  if (j.contains("sector")) {
    std::string sec;
    read(j, "sector", sec, what);
    s.sector = sec;
  }
}

}  // namespace backtest

namespace json_io {

json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

void write_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace json_io
}  // namespace pead
