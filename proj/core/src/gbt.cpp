#include "pead/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pead/error.hpp"

namespace pead::gbt {

std::string_view loss_name(LossKind loss) {
  return loss == LossKind::kLogistic ? "logistic" : "squared_error";
}

LossKind parse_loss(std::string_view name) {
  if (name == "squared_error" || name == "regression") return LossKind::kSquaredError;
  if (name == "logistic" || name == "classification") return LossKind::kLogistic;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected squared_error or logistic)");
}

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

GradientPair grad_hess(LossKind loss, double y, double margin) {
  if (loss == LossKind::kSquaredError) return {margin - y, 1.0};
  const double p = sigmoid(margin);
  return {p - y, p * (1.0 - p)};
}

double loss_value(LossKind loss, double y, double margin) {
  if (loss == LossKind::kSquaredError) return 0.5 * (y - margin) * (y - margin);
  // log(1 + e^m) - y m, evaluated without overflow
  const double softplus = margin > 0.0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
  return softplus - y * margin;
}

double leaf_weight(double sum_grad, double sum_hess, double lambda) {
  const double denom = sum_hess + lambda;
  if (!(denom > 0.0)) throw std::domain_error("leaf_weight: degenerate node, H + lambda <= 0");
  return -sum_grad / denom;
}

double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma) {
  const double g = g_left + g_right;
  const double h = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) - g * g / (h + lambda)) -
         gamma;
}

void TrainConfig::validate() const {
  auto fail = [](const char* field, const char* range) {
    throw ConfigError(std::string("train config: ") + field + " must be " + range);
  };
  if (!(gamma >= 0.0)) fail("gamma", ">= 0");
  if (!(lambda >= 0.0)) fail("lambda", ">= 0");
  if (max_depth < 1) fail("max_depth", ">= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample", "in (0, 1]");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate", "in (0, 1]");
  if (!(min_child_weight >= 0.0)) fail("min_child_weight", ">= 0");
  if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) fail("colsample_bytree", "in (0, 1]");
  if (rounds < 0) fail("rounds", ">= 0");
}

ColumnMatrix::ColumnMatrix(std::size_t rows, std::size_t cols, std::vector<double> column_major)
    : rows_(rows), cols_(cols), data_(std::move(column_major)) {
  if (data_.size() != rows_ * cols_) throw std::invalid_argument("ColumnMatrix: size mismatch");
}

ColumnMatrix ColumnMatrix::from(const features::FeatureMatrix& m) {
  std::vector<double> data(m.rows() * m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) data[c * m.rows() + r] = m.at(r, c);
  }
  return ColumnMatrix(m.rows(), m.cols(), std::move(data));
}

double split_threshold(double a, double b) {
  const double mid = a + (b - a) / 2.0;
  return mid > a ? mid : b;
}

namespace {

// Gains within this distance are ties.
constexpr double kTieEps = 1e-12;

using RowId = std::uint32_t;

// Scans one feature. `present` holds the node's rows with a value for the
// feature, ordered by (value, row).
void scan_feature(std::span<const RowId> present, std::span<const double> col, std::span<const GradientPair> g,
                  int feature, const GradStats& total, const GradStats& missing, const SplitParams& p,
                  std::optional<SplitCandidate>& best) {
  const std::size_t n = present.size();
  if (n < 2) return;
  const double lambda = p.lambda;
  const double mcw = p.min_child_weight;
  const double tg = total.sum_grad;
  const double th = total.sum_hess;
  const double parent = tg * tg / (th + lambda);
  const bool has_missing = missing.count > 0;
  const double mg = missing.sum_grad;
  const double mh = missing.sum_hess;

  bool have = best.has_value();
  double best_gain = have ? best->gain : 0.0;
  std::size_t best_i = n;
  bool best_left = false;
  double best_gl = 0.0;
  double best_hl = 0.0;

  auto gain_of = [&](double gl, double hl) {
    const double al = hl + lambda;
    const double ar = th - hl + lambda;
    const double gr = tg - gl;
    return 0.5 * ((gl * gl * ar + gr * gr * al) / (al * ar) - parent) - p.gamma;
  };

  double gl = 0.0;
  double hl = 0.0;
  double v = col[present[0]];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const GradientPair& gp = g[present[i]];
    gl += gp.grad;
    hl += gp.hess;
    const double next = col[present[i + 1]];
    const bool boundary = next > v;
    v = next;
    if (!boundary) continue;
    if (hl >= mcw && th - hl >= mcw) {
      const double gain = gain_of(gl, hl);
      if (!have || gain > best_gain + kTieEps) {
        have = true;
        best_gain = gain;
        best_i = i;
        best_left = false;
        best_gl = gl;
        best_hl = hl;
      }
    }
    if (has_missing) {
      const double gl2 = gl + mg;
      const double hl2 = hl + mh;
      if (hl2 >= mcw && th - hl2 >= mcw) {
        const double gain = gain_of(gl2, hl2);
        if (!have || gain > best_gain + kTieEps) {
          have = true;
          best_gain = gain;
          best_i = i;
          best_left = true;
          best_gl = gl2;
          best_hl = hl2;
        }
      }
    }
  }
  if (best_i == n) return;
  const std::size_t left_count = best_i + 1 + (best_left ? missing.count : 0);
  best = SplitCandidate{feature,
                        split_threshold(col[present[best_i]], col[present[best_i + 1]]),
                        best_left,
                        best_gain,
                        GradStats{best_gl, best_hl, left_count},
                        GradStats{tg - best_gl, th - best_hl, total.count - left_count}};
}

GradStats sum_rows(std::span<const GradientPair> g, std::span<const std::size_t> rows) {
  GradStats s;
  for (std::size_t r : rows) s.add(g[r]);
  return s;
}

std::vector<RowId> sorted_present(const ColumnMatrix& x, std::span<const std::size_t> rows, std::size_t feature) {
  const auto col = x.column(feature);
  std::vector<RowId> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    if (!std::isnan(col[r])) out.push_back(static_cast<RowId>(r));
  }
  std::sort(out.begin(), out.end(), [&col](RowId a, RowId b) {
    return col[a] < col[b] || (col[a] == col[b] && a < b);
  });
  return out;
}

std::optional<SplitCandidate> finish(std::optional<SplitCandidate> best) {
  if (best && !(best->gain > 0.0)) return std::nullopt;
  return best;
}

bool routes_left(double value, double threshold, bool default_left) {
  return std::isnan(value) ? default_left : value < threshold;
}

}  // namespace

std::optional<SplitCandidate> find_best_split(const ColumnMatrix& x, std::span<const GradientPair> gradients,
                                              std::span<const std::size_t> rows, std::span<const int> features,
                                              const SplitParams& params) {
  std::vector<int> order(features.begin(), features.end());
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> ascending(rows.begin(), rows.end());
  std::sort(ascending.begin(), ascending.end());
  const GradStats total = sum_rows(gradients, ascending);
  std::optional<SplitCandidate> best;
  for (int f : order) {
    const auto fu = static_cast<std::size_t>(f);
    const auto col = x.column(fu);
    GradStats missing;
    for (std::size_t r : ascending) {
      if (std::isnan(col[r])) missing.add(gradients[r]);
    }
    scan_feature(sorted_present(x, ascending, fu), col, gradients, f, total, missing, params, best);
  }
  return finish(best);
}

namespace {

// Per-column row orders computed once per training call.
struct Presorted {
  std::vector<std::vector<RowId>> present;  // by (value, row)
  std::vector<std::vector<RowId>> missing;  // ascending rows

  static Presorted from(const ColumnMatrix& x) {
    Presorted p;
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    p.present.resize(x.cols());
    p.missing.resize(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
      p.present[f] = sorted_present(x, all, f);
      const auto col = x.column(f);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (std::isnan(col[r])) p.missing[f].push_back(static_cast<RowId>(r));
      }
    }
    return p;
  }
};

struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  [[nodiscard]] std::size_t size() const { return end - begin; }
};

// A node owns one segment of the row list and, per candidate feature, one
// segment of that feature's present and missing lists.
struct NodeWork {
  Segment rows;
  std::vector<Segment> present;
  std::vector<Segment> missing;
};

class TreeBuilder {
 public:
  TreeBuilder(const ColumnMatrix& x, std::span<const GradientPair> g, std::vector<int> features,
              const TrainConfig& config, const Presorted& pre)
      : x_(x), g_(g), features_(std::move(features)), config_(config), params_(SplitParams::from(config)),
        pre_(pre), flag_(x.rows(), 0) {}

  RegressionTree build(std::span<const std::size_t> rows) {
    rows_.assign(rows.begin(), rows.end());
    std::sort(rows_.begin(), rows_.end());
    std::fill(flag_.begin(), flag_.end(), 0);
    for (std::size_t r : rows_) flag_[r] = 1;
    all_rows_ = rows_.size() == x_.rows();
    const std::size_t k_count = features_.size();
    present_.resize(k_count);
    missing_.resize(k_count);
    NodeWork root;
    root.rows = {0, rows_.size()};
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto f = static_cast<std::size_t>(features_[k]);
      filter(pre_.present[f], present_[k]);
      filter(pre_.missing[f], missing_[k]);
      root.present.push_back({0, present_[k].size()});
      root.missing.push_back({0, missing_[k].size()});
    }
    grow(root, 0);
    return RegressionTree(std::move(nodes_));
  }

 private:
  void filter(const std::vector<RowId>& from, std::vector<RowId>& to) const {
    if (all_rows_) {
      to = from;
      return;
    }
    to.clear();
    for (RowId r : from) {
      if (flag_[r]) to.push_back(r);
    }
  }

  template <typename T>
  static std::span<const T> view(const std::vector<T>& v, Segment s) {
    return std::span<const T>(v).subspan(s.begin, s.size());
  }

  static std::size_t row_of(std::size_t r) { return r; }

  // Stable in-place partition of a segment by flag_; returns the left part.
  template <typename T>
  Segment split(std::vector<T>& v, Segment s, std::vector<T>& scratch) {
    // Branch-free: every element is written to both sides, only the
    // matching cursor advances.
    if (scratch.size() < s.size()) scratch.resize(s.size());
    std::size_t w = s.begin;
    std::size_t o = 0;
    for (std::size_t i = s.begin; i < s.end; ++i) {
      const T item = v[i];
      const std::size_t left = flag_[row_of(item)];
      v[w] = item;
      scratch[o] = item;
      w += left;
      o += 1 - left;
    }
    std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(o), v.begin() + static_cast<std::ptrdiff_t>(w));
    return {s.begin, w};
  }

  int grow(const NodeWork& work, int depth) {
    const GradStats total = sum_rows(g_, view(rows_, work.rows));
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[id].sum_grad = total.sum_grad;
    nodes_[id].sum_hess = total.sum_hess;
    nodes_[id].count = total.count;

    std::optional<SplitCandidate> best;
    if (depth < config_.max_depth) {
      for (std::size_t k = 0; k < features_.size(); ++k) {
        GradStats missing;
        for (RowId r : view(missing_[k], work.missing[k])) missing.add(g_[r]);
        scan_feature(view(present_[k], work.present[k]), x_.column(static_cast<std::size_t>(features_[k])), g_,
                     features_[k], total, missing, params_, best);
      }
      best = finish(best);
    }
    if (!best) {
      nodes_[id].weight = leaf_weight(total.sum_grad, total.sum_hess, config_.lambda);
      return id;
    }

    const auto col = x_.column(static_cast<std::size_t>(best->feature));
    for (std::size_t i = work.rows.begin; i < work.rows.end; ++i) {
      const std::size_t r = rows_[i];
      flag_[r] = routes_left(col[r], best->threshold, best->default_left) ? 1 : 0;
    }
    NodeWork left;
    NodeWork right;
    const Segment lr = split(rows_, work.rows, row_scratch_);
    left.rows = lr;
    right.rows = {lr.end, work.rows.end};
    // Children at the depth limit become leaves and never scan features.
    const std::size_t partitioned = depth + 1 < config_.max_depth ? features_.size() : 0;
    for (std::size_t k = 0; k < partitioned; ++k) {
      const Segment lp = split(present_[k], work.present[k], id_scratch_);
      left.present.push_back(lp);
      right.present.push_back({lp.end, work.present[k].end});
      const Segment lm = split(missing_[k], work.missing[k], id_scratch_);
      left.missing.push_back(lm);
      right.missing.push_back({lm.end, work.missing[k].end});
    }

    nodes_[id].feature = best->feature;
    nodes_[id].threshold = best->threshold;
    nodes_[id].default_left = best->default_left;
    nodes_[id].gain = best->gain;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const ColumnMatrix& x_;
  std::span<const GradientPair> g_;
  std::vector<int> features_;
  const TrainConfig& config_;
  SplitParams params_;
  const Presorted& pre_;
  std::vector<char> flag_;
  std::vector<std::size_t> rows_;
  std::vector<std::vector<RowId>> present_;
  std::vector<std::vector<RowId>> missing_;
  std::vector<std::size_t> row_scratch_;
  std::vector<RowId> id_scratch_;
  bool all_rows_ = false;
  std::vector<TreeNode> nodes_;
};

RegressionTree grow_presorted(const ColumnMatrix& x, std::span<const GradientPair> gradients,
                              std::span<const std::size_t> rows, std::span<const int> features,
                              const TrainConfig& config, const Presorted& pre) {
  if (rows.empty()) throw std::invalid_argument("grow_tree: empty instance set");
  std::vector<int> order(features.begin(), features.end());
  std::sort(order.begin(), order.end());
  return TreeBuilder(x, gradients, std::move(order), config, pre).build(rows);
}

}  // namespace

RegressionTree grow_tree(const ColumnMatrix& x, std::span<const GradientPair> gradients,
                         std::span<const std::size_t> rows, std::span<const int> features, const TrainConfig& config) {
  return grow_presorted(x, gradients, rows, features, config, Presorted::from(x));
}

std::size_t RegressionTree::leaf_of(std::span<const double> row) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    const bool left = routes_left(row[static_cast<std::size_t>(n.feature)], n.threshold, n.default_left);
    i = static_cast<std::size_t>(left ? n.left : n.right);
  }
  return i;
}

std::size_t RegressionTree::leaf_of(const ColumnMatrix& x, std::size_t row) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    const bool left = routes_left(x.at(row, static_cast<std::size_t>(n.feature)), n.threshold, n.default_left);
    i = static_cast<std::size_t>(left ? n.left : n.right);
  }
  return i;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double Ensemble::predict_margin(std::span<const double> row) const {
  if (row.size() != feature_names.size()) {
    throw std::invalid_argument("predict: row has " + std::to_string(row.size()) + " features, model expects " +
                                std::to_string(feature_names.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(row);
  return base_score + learning_rate * sum;
}

double Ensemble::predict(std::span<const double> row) const {
  const double m = predict_margin(row);
  return loss == LossKind::kLogistic ? sigmoid(m) : m;
}

std::vector<double> Ensemble::predict(const features::FeatureMatrix& m) const {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = predict(m.row(r));
  return out;
}

std::map<std::string, double> Ensemble::importance() const {
  std::map<std::string, double> out;
  for (const auto& name : feature_names) out.emplace(name, 0.0);
  for (const auto& t : trees) {
    for (const auto& n : t.nodes()) {
      if (!n.is_leaf()) out[feature_names.at(static_cast<std::size_t>(n.feature))] += n.gain;
    }
  }
  return out;
}

namespace {

double regularization(const RegressionTree& t, const TrainConfig& c, double shrinkage) {
  double sq = 0.0;
  for (const auto& n : t.nodes()) {
    if (n.is_leaf()) sq += (shrinkage * n.weight) * (shrinkage * n.weight);
  }
  return c.gamma * static_cast<double>(t.leaf_count()) + 0.5 * c.lambda * sq;
}

double base_score_for(LossKind loss, std::span<const double> labels) {
  // Running mean: exact for constant labels.
  double mean = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) mean += (labels[i] - mean) / static_cast<double>(i + 1);
  if (loss == LossKind::kSquaredError) return mean;
  const double p = std::clamp(mean, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

}  // namespace

double objective(const Ensemble& model, const ColumnMatrix& x, std::span<const double> labels, const TrainConfig& c) {
  double total = 0.0;
  std::vector<double> row(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t k = 0; k < x.cols(); ++k) row[k] = x.at(r, k);
    total += loss_value(model.loss, labels[r], model.predict_margin(row));
  }
  for (const auto& t : model.trees) total += regularization(t, c, model.learning_rate);
  return total;
}

Ensemble train(const features::FeatureMatrix& matrix, std::span<const double> labels, const TrainConfig& config,
               LossKind loss, TrainTrace* trace) {
  return train(ColumnMatrix::from(matrix), matrix.column_names(), labels, config, loss, trace);
}

Ensemble train(const ColumnMatrix& x, std::vector<std::string> feature_names, std::span<const double> labels,
               const TrainConfig& config, LossKind loss, TrainTrace* trace) {
  config.validate();
  if (x.rows() == 0 || x.cols() == 0) throw std::invalid_argument("train: empty matrix");
  if (labels.size() != x.rows()) throw std::invalid_argument("train: label count does not match matrix rows");
  if (feature_names.size() != x.cols()) throw std::invalid_argument("train: feature name count mismatch");
  for (double y : labels) {
    if (!std::isfinite(y)) throw std::invalid_argument("train: non-finite label");
    if (loss == LossKind::kLogistic && y != 0.0 && y != 1.0) {
      throw std::invalid_argument("train: logistic labels must be 0 or 1");
    }
  }

  Ensemble model;
  model.loss = loss;
  model.learning_rate = config.learning_rate;
  model.feature_names = std::move(feature_names);
  model.base_score = base_score_for(loss, labels);
  model.trees.reserve(static_cast<std::size_t>(config.rounds));

  const std::size_t n = x.rows();
  std::vector<double> margin(n, model.base_score);
  std::vector<GradientPair> gradients(n);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::vector<int> all_features(x.cols());
  std::iota(all_features.begin(), all_features.end(), 0);
  std::mt19937_64 rng(config.seed);

  const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(config.subsample * static_cast<double>(n)));
  const auto n_cols =
      std::max<std::size_t>(1, static_cast<std::size_t>(config.colsample_bytree * static_cast<double>(x.cols())));

  double loss_sum = 0.0;
  double reg_sum = 0.0;
  if (trace) {
    for (std::size_t r = 0; r < n; ++r) loss_sum += loss_value(loss, labels[r], margin[r]);
    trace->initial_objective = loss_sum;
  }

  std::vector<std::size_t> row_pool = all_rows;
  std::vector<int> col_pool = all_features;
  const Presorted pre = Presorted::from(x);
  for (int round = 0; round < config.rounds; ++round) {
    for (std::size_t r = 0; r < n; ++r) gradients[r] = grad_hess(loss, labels[r], margin[r]);

    // Partial Fisher-Yates draws without replacement.
    std::span<const std::size_t> rows(all_rows);
    std::vector<std::size_t> sampled;
    if (n_rows < n) {
      row_pool = all_rows;
      for (std::size_t i = 0; i < n_rows; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(row_pool[i], row_pool[pick(rng)]);
      }
      sampled.assign(row_pool.begin(), row_pool.begin() + static_cast<std::ptrdiff_t>(n_rows));
      std::sort(sampled.begin(), sampled.end());
      rows = sampled;
    }
    std::span<const int> cols(all_features);
    std::vector<int> chosen;
    if (n_cols < x.cols()) {
      col_pool = all_features;
      for (std::size_t i = 0; i < n_cols; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, x.cols() - 1);
        std::swap(col_pool[i], col_pool[pick(rng)]);
      }
      chosen.assign(col_pool.begin(), col_pool.begin() + static_cast<std::ptrdiff_t>(n_cols));
      std::sort(chosen.begin(), chosen.end());
      cols = chosen;
    }

    RegressionTree tree = grow_presorted(x, gradients, rows, cols, config, pre);
    for (std::size_t r = 0; r < n; ++r) {
      margin[r] += config.learning_rate * tree.nodes()[tree.leaf_of(x, r)].weight;
    }
    if (trace) {
      loss_sum = 0.0;
      for (std::size_t r = 0; r < n; ++r) loss_sum += loss_value(loss, labels[r], margin[r]);
      reg_sum += regularization(tree, config, config.learning_rate);
      TrainTrace::Round rec;
      rec.objective = loss_sum + reg_sum;
      if (trace->keep_gradients) {
        rec.rows.assign(rows.begin(), rows.end());
        rec.gradients = gradients;
      }
      trace->rounds.push_back(std::move(rec));
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace pead::gbt
