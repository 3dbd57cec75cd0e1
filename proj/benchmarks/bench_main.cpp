#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "pead/backtest.hpp"
#include "pead/gbt.hpp"
#include "pead/market_data.hpp"
#include "pead/synth.hpp"

namespace {

using namespace pead;

gbt::ColumnMatrix random_columns(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = normal(rng);
  return gbt::ColumnMatrix(rows, cols, std::move(data));
}

void BM_FindBestSplit(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto x = random_columns(rows, 32, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<gbt::GradientPair> g(rows);
  for (auto& p : g) p = {normal(rng), 1.0};
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<int> features(32);
  std::iota(features.begin(), features.end(), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gbt::find_best_split(x, g, idx, features, gbt::SplitParams{}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows) * 32);
}
BENCHMARK(BM_FindBestSplit)->Arg(256)->Arg(4096);

// Random labels force full-depth trees, the costly case.
void BM_Train(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto x = random_columns(rows, 93, 3);
  std::mt19937_64 rng(4);
  std::vector<double> y(rows);
  for (double& v : y) v = static_cast<double>(rng() & 1U);
  std::vector<std::string> names;
  for (int i = 0; i < 93; ++i) names.push_back("f" + std::to_string(i));
  gbt::TrainConfig c;
  c.rounds = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(gbt::train(x, names, y, c, gbt::LossKind::kLogistic));
  }
}
BENCHMARK(BM_Train)->Args({1200, 20})->Unit(benchmark::kMillisecond);

void BM_CumulativeAbnormalReturn(benchmark::State& state) {
  synth::SynthConfig c;
  c.companies = 2;
  c.quarters = 4;
  const auto data = synth::generate(c).data;
  const auto& stock = data.prices.begin()->second;
  const auto start = data.events.front().t0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(market::cumulative_abnormal_return(stock, data.index, data.calendar, start, 30));
  }
}
BENCHMARK(BM_CumulativeAbnormalReturn);

void BM_BuildStudyData(benchmark::State& state) {
  synth::SynthConfig c;
  c.companies = static_cast<int>(state.range(0));
  const auto data = synth::generate(c).data;
  for (auto _ : state) {
    benchmark::DoNotOptimize(backtest::build_study_data(data, features::FeatureSpec::defaults()));
  }
}
BENCHMARK(BM_BuildStudyData)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
