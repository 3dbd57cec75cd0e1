#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "pead/features.hpp"
#include "pead/market_data.hpp"

namespace pead::synth {

enum class DriftTiming {
  kFromT0,  // drift accrues over trading days 1..horizon after t0
  kFromT1,  // day 1 carries a transient shock that reverses over days 2..horizon
};

std::string_view drift_timing_name(DriftTiming t);
DriftTiming parse_drift_timing(std::string_view name);

struct SynthConfig {
  int companies = 200;
  int quarters = 12;
  FiscalQuarter first_quarter{2015, 1};
  /// Engineered feature name -> weight on the planted CAR. Missing feature
  /// values contribute zero.
  std::map<std::string, double> weights{{features::kSurprise, 1.0}};
  /// Std of the Gaussian CAR noise added per event.
  double noise_std = 0.0125;
  DriftTiming timing = DriftTiming::kFromT0;
  /// Std of the day-one shock under kFromT1.
  double shock_std = 0.04;
  /// Earnings surprises have magnitude uniform in [min, max] and a random sign.
  double surprise_min = 0.02;
  double surprise_max = 0.06;
  double idiosyncratic_vol = 0.01;
  double index_vol = 0.01;
  int horizon = 30;
  std::string id_prefix = "C";
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlantedEvent {
  double signal = 0.0;  // weighted sum of planted feature values
  double noise = 0.0;
  double car = 0.0;     // signal + noise, realized over the horizon
  double shock = 0.0;   // day-one shock (kFromT1 only)
  std::map<std::string, double> feature_values;  // the weighted features
};

struct SynthResult {
  market::RawDataset data;
  std::map<market::EventKey, PlantedEvent> truth;
  /// Root mean square of the planted signal over all events.
  double signal_rms = 0.0;
};

/// Deterministic per seed. Each company draws from its own stream keyed by
/// its position, so relabeling companies does not change their events.
SynthResult generate(const SynthConfig& config);

}  // namespace pead::synth
