#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pead/features.hpp"

namespace pead::gbt {

enum class LossKind {
  kSquaredError,  // l = (y - yhat)^2 / 2, regression of CAR
  kLogistic,      // binary cross-entropy on a margin, labels in {0, 1}
};

std::string_view loss_name(LossKind loss);
LossKind parse_loss(std::string_view name);

struct GradientPair {
  double grad = 0.0;
  double hess = 0.0;
};

/// Sums of gradient statistics over an instance set.
struct GradStats {
  double sum_grad = 0.0;
  double sum_hess = 0.0;
  std::size_t count = 0;

  void add(const GradientPair& p) {
    sum_grad += p.grad;
    sum_hess += p.hess;
    ++count;
  }
};

GradientPair grad_hess(LossKind loss, double y, double margin);
double loss_value(LossKind loss, double y, double margin);
double sigmoid(double margin);

/// Optimal leaf output -G / (H + lambda). Throws std::domain_error when
/// H + lambda is not positive.
double leaf_weight(double sum_grad, double sum_hess, double lambda);

/// Regularized split score:
///   1/2 [GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma);

struct TrainConfig {
  double gamma = 0.0;
  double lambda = 1.0;
  int max_depth = 6;
  double subsample = 1.0;
  double learning_rate = 0.3;
  double min_child_weight = 1.0;
  double colsample_bytree = 1.0;
  int rounds = 200;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first out-of-range field.
  void validate() const;
};

struct SplitParams {
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;

  static SplitParams from(const TrainConfig& c) { return {c.lambda, c.gamma, c.min_child_weight}; }
};

/// Column-major copy of a feature matrix; NaN marks missing.
class ColumnMatrix {
 public:
  ColumnMatrix() = default;
  ColumnMatrix(std::size_t rows, std::size_t cols, std::vector<double> column_major);
  static ColumnMatrix from(const features::FeatureMatrix& m);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }
  [[nodiscard]] std::span<const double> column(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  bool default_left = false;
  double gain = 0.0;
  GradStats left;
  GradStats right;
};

/// Split point between adjacent distinct values a < b; a routes left and b
/// routes right under the rule `x < threshold`.
double split_threshold(double a, double b);

/// Exact greedy search over every boundary between adjacent distinct
/// values of each listed feature, trying missing rows on both sides.
/// Ties resolve to the lower feature index, then the lower threshold, then
/// missing-goes-right. Returns nullopt if no candidate has positive gain
/// with both children meeting min_child_weight.
std::optional<SplitCandidate> find_best_split(const ColumnMatrix& x, std::span<const GradientPair> gradients,
                                              std::span<const std::size_t> rows, std::span<const int> features,
                                              const SplitParams& params);

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  bool default_left = false;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf output (before shrinkage)
  double gain = 0.0;    // realized split gain
  double sum_grad = 0.0;
  double sum_hess = 0.0;
  std::size_t count = 0;

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  [[nodiscard]] const std::vector<TreeNode>& nodes() const { return nodes_; }
  /// Index of the leaf reached by a row.
  [[nodiscard]] std::size_t leaf_of(std::span<const double> row) const;
  [[nodiscard]] std::size_t leaf_of(const ColumnMatrix& x, std::size_t row) const;
  [[nodiscard]] double predict(std::span<const double> row) const { return nodes_[leaf_of(row)].weight; }
  [[nodiscard]] std::size_t leaf_count() const;
  [[nodiscard]] std::size_t split_count() const { return nodes_.size() - leaf_count(); }

 private:
  std::vector<TreeNode> nodes_;
};

/// Grows one tree depth-first: split while depth < max_depth and a split
/// is found, otherwise emit a leaf weighted -G/(H+lambda).
RegressionTree grow_tree(const ColumnMatrix& x, std::span<const GradientPair> gradients,
                         std::span<const std::size_t> rows, std::span<const int> features, const TrainConfig& config);

/// Additive tree model: margin = base_score + learning_rate * sum of trees.
struct Ensemble {
  LossKind loss = LossKind::kSquaredError;
  double base_score = 0.0;
  double learning_rate = 0.3;
  std::vector<std::string> feature_names;
  std::vector<RegressionTree> trees;

  [[nodiscard]] double predict_margin(std::span<const double> row) const;
  /// Regression value, or probability for the logistic loss.
  [[nodiscard]] double predict(std::span<const double> row) const;
  [[nodiscard]] std::vector<double> predict(const features::FeatureMatrix& m) const;
  /// Total split gain per feature; unused features map to 0.
  [[nodiscard]] std::map<std::string, double> importance() const;
};

/// Optional per-round record of training, for diagnostics and tests.
struct TrainTrace {
  struct Round {
    std::vector<std::size_t> rows;
    std::vector<GradientPair> gradients;  // indexed by matrix row
    double objective = 0.0;               // after adding the round's tree
  };
  bool keep_gradients = true;
  double initial_objective = 0.0;
  std::vector<Round> rounds;
};

/// Regularized training objective: sum of losses plus, per tree,
/// gamma * leaves + lambda/2 * sum of squared (shrunk) leaf outputs.
double objective(const Ensemble& model, const ColumnMatrix& x, std::span<const double> labels, const TrainConfig& c);

Ensemble train(const features::FeatureMatrix& matrix, std::span<const double> labels, const TrainConfig& config,
               LossKind loss, TrainTrace* trace = nullptr);
Ensemble train(const ColumnMatrix& x, std::vector<std::string> feature_names, std::span<const double> labels,
               const TrainConfig& config, LossKind loss, TrainTrace* trace = nullptr);

std::string to_json_string(const Ensemble& model);
Ensemble ensemble_from_json_string(const std::string& text);
void save(const Ensemble& model, const std::string& path);
Ensemble load(const std::string& path);

}  // namespace pead::gbt
