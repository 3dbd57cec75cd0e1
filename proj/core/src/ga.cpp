#include "pead/ga.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pead/error.hpp"
#include "pead/parallel.hpp"

namespace pead::ga {
namespace {

constexpr double kLatticeTol = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, generation, slot).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t generation, std::uint64_t slot) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ generation) ^ slot));
}

double random_gene(const GeneRange& g, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, g.lattice_size() - 1);
  return g.value_at(pick(rng));
}

double fitness_key(const Individual& ind) {
  return ind.evaluated() ? ind.fitness : std::numeric_limits<double>::infinity();
}

}  // namespace

std::size_t GeneRange::lattice_size() const {
  return static_cast<std::size_t>(std::llround((max - min) / step)) + 1;
}

double GeneRange::value_at(std::size_t index) const {
  if (index + 1 >= lattice_size()) return max;
  return min + static_cast<double>(index) * step;
}

bool GeneRange::on_lattice(double value) const {
  const double span_tol = kLatticeTol * step;
  if (value < min - span_tol || value > max + span_tol) return false;
  const double pos = (value - min) / step;
  return std::abs(pos - std::round(pos)) < kLatticeTol;
}

SearchSpace SearchSpace::defaults() {
  return SearchSpace{{
      {"gamma", 0.0, 5.0, 0.1},
      {"max_depth", 2.0, 10.0, 1.0},
      {"subsample", 0.5, 1.0, 0.05},
      {"learning_rate", 0.01, 0.3, 0.01},
      {"min_child_weight", 0.0, 10.0, 0.5},
      {"colsample_bytree", 0.5, 1.0, 0.05},
  }};
}

void SearchSpace::validate() const {
  if (genes.empty()) throw ConfigError("search space: no genes");
  for (const auto& g : genes) {
    if (!(g.min <= g.max)) throw ConfigError("search space: gene '" + g.name + "' needs min <= max");
    if (!(g.step > 0.0)) throw ConfigError("search space: gene '" + g.name + "' needs step > 0");
    const double steps = (g.max - g.min) / g.step;
    if (std::abs(steps - std::round(steps)) > kLatticeTol) {
      throw ConfigError("search space: step of gene '" + g.name + "' does not divide its range");
    }
  }
}

std::size_t SearchSpace::cardinality() const {
  std::size_t total = 1;
  for (const auto& g : genes) {
    const std::size_t s = g.lattice_size();
    if (total > std::numeric_limits<std::size_t>::max() / s) return std::numeric_limits<std::size_t>::max();
    total *= s;
  }
  return total;
}

void GaConfig::validate() const {
  if (population < 2) throw ConfigError("ga config: population must be >= 2");
  if (survivors < 1 || survivors >= population) throw ConfigError("ga config: need 1 <= survivors < population");
  if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0)) {
    throw ConfigError("ga config: mutation_probability must lie in [0, 1]");
  }
  if (!(tolerance > 0.0)) throw ConfigError("ga config: tolerance must be > 0");
  if (max_generations < 1) throw ConfigError("ga config: max_generations must be >= 1");
  if (patience < 1) throw ConfigError("ga config: patience must be >= 1");
  if (folds < 2) throw ConfigError("ga config: folds must be >= 2");
}

Generation init_generation(const SearchSpace& space, const GaConfig& config) {
  space.validate();
  config.validate();
  Generation gen(config.population);
  for (std::size_t i = 0; i < gen.size(); ++i) {
    auto rng = stream(config.seed, 0, i);
    for (const auto& g : space.genes) gen[i].chromosome.genes.push_back(random_gene(g, rng));
  }
  return gen;
}

Generation evolve_step(const Generation& evaluated, const SearchSpace& space, const GaConfig& config,
                       int generation_index) {
  config.validate();
  if (evaluated.size() != config.population) throw std::invalid_argument("evolve_step: population size mismatch");
  std::vector<std::size_t> order(evaluated.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitness_key(evaluated[a]) < fitness_key(evaluated[b]);
  });

  Generation next;
  next.reserve(config.population);
  for (std::size_t i = 0; i < config.survivors; ++i) next.push_back(evaluated[order[i]]);

  const std::size_t children = config.population - config.survivors;
  for (std::size_t c = 0; c < children; ++c) {
    auto rng = stream(config.seed, static_cast<std::uint64_t>(generation_index) + 1, c);
    std::uniform_int_distribution<std::size_t> parent(0, config.survivors - 1);
    const Chromosome& a = next[parent(rng)].chromosome;
    const Chromosome& b = next[parent(rng)].chromosome;
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Individual child;
    child.chromosome.genes.resize(space.genes.size());
    for (std::size_t k = 0; k < space.genes.size(); ++k) {
      double v = coin(rng) ? a.genes[k] : b.genes[k];
      if (unit(rng) < config.mutation_probability) v = random_gene(space.genes[k], rng);
      child.chromosome.genes[k] = v;
    }
    next.push_back(std::move(child));
  }
  return next;
}

namespace {

void evaluate(Generation& gen, const FitnessFn& fitness, unsigned threads) {
  parallel_for(gen.size(), threads, [&](std::size_t i) {
    if (!gen[i].evaluated()) gen[i].fitness = fitness(gen[i].chromosome);
  });
}

GenerationStats summarize(const Generation& gen, int index, std::size_t& best_pos) {
  GenerationStats s;
  s.generation = index;
  best_pos = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    sum += gen[i].fitness;
    if (fitness_key(gen[i]) < fitness_key(gen[best_pos])) best_pos = i;
  }
  s.best = gen[best_pos].fitness;
  s.mean = sum / static_cast<double>(gen.size());
  return s;
}

}  // namespace

OptimizeResult optimize(const SearchSpace& space, const GaConfig& config, const FitnessFn& fitness) {
  Generation gen = init_generation(space, config);
  evaluate(gen, fitness, config.threads);
  OptimizeResult result;
  std::size_t best_pos = 0;
  result.history.push_back(summarize(gen, 0, best_pos));
  result.best = gen[best_pos].chromosome;
  result.best_fitness = gen[best_pos].fitness;

  int stalled = 0;
  for (int t = 1; t < config.max_generations; ++t) {
    gen = evolve_step(gen, space, config, t);
    evaluate(gen, fitness, config.threads);
    const double previous = result.best_fitness;
    result.history.push_back(summarize(gen, t, best_pos));
    result.best = gen[best_pos].chromosome;
    result.best_fitness = gen[best_pos].fitness;
    stalled = std::abs(result.best_fitness - previous) < config.tolerance ? stalled + 1 : 0;
    if (stalled >= config.patience) break;
  }
  return result;
}

gbt::TrainConfig apply(const gbt::TrainConfig& base, const SearchSpace& space, const Chromosome& c) {
  if (c.genes.size() != space.genes.size()) throw std::invalid_argument("apply: chromosome/space size mismatch");
  gbt::TrainConfig out = base;
  for (std::size_t k = 0; k < c.genes.size(); ++k) {
    const auto& name = space.genes[k].name;
    const double v = c.genes[k];
    if (name == "gamma") {
      out.gamma = v;
    } else if (name == "max_depth") {
      out.max_depth = static_cast<int>(std::lround(v));
    } else if (name == "subsample") {
      out.subsample = v;
    } else if (name == "learning_rate") {
      out.learning_rate = v;
    } else if (name == "min_child_weight") {
      out.min_child_weight = v;
    } else if (name == "colsample_bytree") {
      out.colsample_bytree = v;
    } else if (name == "lambda") {
      out.lambda = v;
    } else if (name == "rounds") {
      out.rounds = static_cast<int>(std::lround(v));
    } else {
      throw ConfigError("unknown hyperparameter gene '" + name + "'");
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> fold_indices(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fold_indices: k must be >= 2");
  if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("fold_indices: fewer rows than folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  const auto folds = static_cast<std::size_t>(k);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(out[f].begin(), out[f].end());
    pos += size;
  }
  return out;
}

double cv_fitness(const features::FeatureMatrix& matrix, std::span<const double> labels,
                  const gbt::TrainConfig& config, int k, gbt::LossKind loss, std::uint64_t seed) {
  if (labels.size() != matrix.rows()) throw std::invalid_argument("cv_fitness: label count mismatch");
  if (k < 2 || matrix.rows() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("cv_fitness: need 2 <= k <= rows");
  }
  const auto folds = fold_indices(matrix.rows(), k, seed);
  std::vector<char> held(matrix.rows());
  double total = 0.0;
  for (const auto& fold : folds) {
    std::fill(held.begin(), held.end(), 0);
    for (std::size_t r : fold) held[r] = 1;
    std::vector<std::size_t> train_rows;
    std::vector<double> train_labels;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
      if (!held[r]) {
        train_rows.push_back(r);
        train_labels.push_back(labels[r]);
      }
    }
    const auto model = gbt::train(matrix.select_rows(train_rows), train_labels, config, loss);
    double acc = 0.0;
    for (std::size_t r : fold) {
      const double p = model.predict(matrix.row(r));
      if (loss == gbt::LossKind::kSquaredError) {
        acc += (p - labels[r]) * (p - labels[r]);
      } else {
        acc += ((p >= 0.5 ? 1.0 : 0.0) != labels[r]) ? 1.0 : 0.0;
      }
    }
    const double mean = acc / static_cast<double>(fold.size());
    total += loss == gbt::LossKind::kSquaredError ? std::sqrt(mean) : mean;
  }
  return total / static_cast<double>(k);
}

OptimizeResult optimize(const features::FeatureMatrix& matrix, std::span<const double> labels,
                        const SearchSpace& space, const GaConfig& config, gbt::LossKind loss,
                        const gbt::TrainConfig& base) {
  const std::vector<double> y(labels.begin(), labels.end());
  return optimize(space, config, [&](const Chromosome& c) {
    return cv_fitness(matrix, y, apply(base, space, c), config.folds, loss, config.seed);
  });
}

}  // namespace pead::ga
