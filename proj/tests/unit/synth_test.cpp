#include "pead/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "pead/error.hpp"
#include "pead/features.hpp"
#include "pead/market_data.hpp"
#include "temp_dir.hpp"

namespace pead::synth {
namespace {

SynthConfig small(std::uint64_t seed) {
  SynthConfig c;
  c.companies = 8;
  c.quarters = 8;
  c.seed = seed;
  return c;
}

const market::EarningsEvent& event_of(const market::RawDataset& d, const market::EventKey& key) {
  for (const auto& e : d.events) {
    if (e.key() == key) return e;
  }
  throw std::out_of_range("no event " + key.to_string());
}

double realized_car(const market::RawDataset& d, const market::EarningsEvent& e, int horizon) {
  return market::cumulative_abnormal_return(d.prices.at(e.company_id), d.index, d.calendar, e.t0, horizon);
}

TEST(SynthConfigTest, Validate) {
  EXPECT_NO_THROW(SynthConfig{}.validate());
  SynthConfig c;
  c.companies = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.noise_std = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.weights = {{"Not_A_Feature", 1.0}};
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.surprise_min = 0.1;
  c.surprise_max = 0.05;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DriftTimingTest, Names) {
  EXPECT_EQ(parse_drift_timing("from-t0"), DriftTiming::kFromT0);
  EXPECT_EQ(parse_drift_timing("from-t1"), DriftTiming::kFromT1);
  EXPECT_EQ(drift_timing_name(DriftTiming::kFromT1), "from-t1");
  EXPECT_THROW(parse_drift_timing("t2"), ConfigError);
}

TEST(GenerateTest, ShapeAndDeterminism) {
  const auto a = generate(small(3));
  const auto b = generate(small(3));
  EXPECT_EQ(a.data.events.size(), 64U);
  EXPECT_EQ(a.truth.size(), 64U);
  EXPECT_EQ(a.data.prices.size(), 8U);
  EXPECT_EQ(a.signal_rms, b.signal_rms);
  for (std::size_t i = 0; i < a.data.events.size(); ++i) {
    EXPECT_EQ(a.data.events[i].key(), b.data.events[i].key());
    EXPECT_EQ(a.data.events[i].reported_eps, b.data.events[i].reported_eps);
  }
  EXPECT_EQ(a.data.prices.at("C0005").closes(), b.data.prices.at("C0005").closes());
  EXPECT_NE(generate(small(4)).data.prices.at("C0005").closes(), a.data.prices.at("C0005").closes());
}

TEST(GenerateTest, RelabelingCompaniesKeepsTheirEvents) {
  auto renamed = small(3);
  renamed.id_prefix = "Z";
  const auto a = generate(small(3));
  const auto b = generate(renamed);
  ASSERT_EQ(a.data.events.size(), b.data.events.size());
  for (std::size_t i = 0; i < a.data.events.size(); ++i) {
    const auto& x = a.data.events[i];
    const auto& y = b.data.events[i];
    EXPECT_EQ("Z" + x.company_id.substr(1), y.company_id);
    EXPECT_EQ(x.announce_date, y.announce_date);
    EXPECT_EQ(x.reported_eps, y.reported_eps);
    EXPECT_EQ(x.fundamentals, y.fundamentals);
    EXPECT_EQ(a.truth.at(x.key()).car, b.truth.at(y.key()).car);
  }
  EXPECT_EQ(a.data.prices.at("C0002").closes(), b.data.prices.at("Z0002").closes());
}

TEST(GenerateTest, PlantedFeaturesMatchEngineeredFeatures) {
  auto c = small(5);
  c.weights = {{features::kSurprise, 1.0}, {features::kRsi9, 0.001}, {"Revenue_Q_Change", 1e-4}};
  const auto r = generate(c);
  const auto m = features::engineer_features(r.data, features::FeatureSpec::defaults());
  for (std::size_t row = 0; row < m.rows(); ++row) {
    const auto& planted = r.truth.at(m.row_keys()[row]);
    for (const auto& [name, v] : planted.feature_values) {
      const double engineered = m.at(row, *m.column_index(name));
      if (std::isnan(v)) {
        EXPECT_TRUE(std::isnan(engineered)) << name;
      } else {
        EXPECT_NEAR(engineered, v, 1e-9) << name;
      }
    }
  }
}

TEST(GenerateTest, RealizedCarMatchesPlanted) {
  for (auto timing : {DriftTiming::kFromT0, DriftTiming::kFromT1}) {
    auto c = small(6);
    c.timing = timing;
    const auto r = generate(c);
    for (const auto& [key, planted] : r.truth) {
      EXPECT_NEAR(realized_car(r.data, event_of(r.data, key), c.horizon), planted.car, 1e-9) << key.to_string();
      EXPECT_EQ(planted.car, planted.signal + planted.noise);
    }
  }
}

TEST(GenerateTest, NoiselessSignEqualsSurpriseSign) {
  auto c = small(7);
  c.noise_std = 0.0;
  const auto r = generate(c);
  for (const auto& e : r.data.events) {
    const double car = realized_car(r.data, e, c.horizon);
    EXPECT_EQ(car >= 0.0, e.surprise() >= 0.0) << e.key().to_string();
  }
}

TEST(GenerateTest, ZeroWeightsGivePureNoise) {
  auto c = small(8);
  c.weights.clear();
  const auto r = generate(c);
  EXPECT_EQ(r.signal_rms, 0.0);
  for (const auto& [key, planted] : r.truth) EXPECT_EQ(planted.car, planted.noise);
}

TEST(GenerateTest, FromT1DayOneCarriesShock) {
  auto c = small(9);
  c.timing = DriftTiming::kFromT1;
  const auto r = generate(c);
  for (const auto& [key, planted] : r.truth) {
    const auto& e = event_of(r.data, key);
    EXPECT_NEAR(realized_car(r.data, e, 1), planted.shock, 1e-12) << key.to_string();
  }
}

TEST(GenerateTest, BundleRoundTrip) {
  const auto r = generate(small(10));
  testing_support::TempDir dir("pead_synth");
  market::write_bundle(r.data, dir.path().string());
  const auto back = market::ingest(market::BundlePaths::in_directory(dir.path().string()));
  EXPECT_EQ(back.stats.events_dropped, 0U);
  ASSERT_EQ(back.events.size(), r.data.events.size());
  const auto spec = features::FeatureSpec::defaults();
  const auto a = features::engineer_features(r.data, spec);
  const auto b = features::engineer_features(back, spec);
  ASSERT_EQ(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double x = a.values()[i];
    const double y = b.values()[i];
    if (std::isnan(x)) {
      EXPECT_TRUE(std::isnan(y));
    } else {
      EXPECT_NEAR(x, y, 1e-9 * std::max(1.0, std::abs(x)));
    }
  }
}

}  // namespace
}  // namespace pead::synth
