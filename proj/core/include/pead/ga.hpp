#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pead/features.hpp"
#include "pead/gbt.hpp"

namespace pead::ga {

/// Bounded lattice {min, min + step, ..., max} for one hyperparameter.
struct GeneRange {
  std::string name;
  double min = 0.0;
  double max = 1.0;
  double step = 0.1;

  [[nodiscard]] std::size_t lattice_size() const;
  [[nodiscard]] double value_at(std::size_t index) const;
  [[nodiscard]] bool on_lattice(double value) const;
};

struct SearchSpace {
  std::vector<GeneRange> genes;

  /// gamma, max_depth, subsample, learning_rate, min_child_weight,
  /// colsample_bytree over broad ranges with fine steps.
  static SearchSpace defaults();
  /// Throws ConfigError on min >= max, step <= 0 or a step that does not
  /// divide the range.
  void validate() const;
  /// Number of lattice points (saturates at SIZE_MAX).
  [[nodiscard]] std::size_t cardinality() const;
};

/// A full hyperparameter assignment, one value per gene.
struct Chromosome {
  std::vector<double> genes;
  friend bool operator==(const Chromosome&, const Chromosome&) = default;
};

struct Individual {
  Chromosome chromosome;
  double fitness = std::numeric_limits<double>::quiet_NaN();
  [[nodiscard]] bool evaluated() const { return fitness == fitness; }
};

using Generation = std::vector<Individual>;

struct GaConfig {
  std::size_t population = 40;
  std::size_t survivors = 20;
  double mutation_probability = 0.1;
  double tolerance = 1e-4;
  /// Consecutive generations whose best fitness stays within tolerance
  /// before stopping; 1 stops at the first stall.
  int patience = 20;
  int max_generations = 30;
  int folds = 5;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

using FitnessFn = std::function<double(const Chromosome&)>;

Generation init_generation(const SearchSpace& space, const GaConfig& config);

/// Keeps the `survivors` fittest (stable by position), then appends
/// children bred by uniform crossover of random survivor pairs with
/// per-gene lattice mutation. `generation_index` decorrelates the
/// per-child random streams across generations.
Generation evolve_step(const Generation& evaluated, const SearchSpace& space, const GaConfig& config,
                       int generation_index);

struct GenerationStats {
  int generation = 0;
  double best = 0.0;
  double mean = 0.0;
};

struct OptimizeResult {
  Chromosome best;
  double best_fitness = 0.0;
  std::vector<GenerationStats> history;
};

/// Evaluate/evolve until the best fitness has moved by less than the
/// tolerance for `patience` consecutive generations, or max_generations is
/// reached.
OptimizeResult optimize(const SearchSpace& space, const GaConfig& config, const FitnessFn& fitness);

/// Applies named genes (gamma, max_depth, subsample, learning_rate,
/// min_child_weight, colsample_bytree, lambda, rounds) onto a base config.
gbt::TrainConfig apply(const gbt::TrainConfig& base, const SearchSpace& space, const Chromosome& c);

/// Seeded partition of [0, n) into k folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> fold_indices(std::size_t n, int k, std::uint64_t seed);

/// Mean held-out loss over k folds: RMSE for squared error, error rate at
/// probability 0.5 for logistic. Throws std::invalid_argument if rows < k.
double cv_fitness(const features::FeatureMatrix& matrix, std::span<const double> labels,
                  const gbt::TrainConfig& config, int k, gbt::LossKind loss, std::uint64_t seed);

/// GA search with cross-validated fitness on (matrix, labels).
OptimizeResult optimize(const features::FeatureMatrix& matrix, std::span<const double> labels,
                        const SearchSpace& space, const GaConfig& config, gbt::LossKind loss,
                        const gbt::TrainConfig& base);

}  // namespace pead::ga
