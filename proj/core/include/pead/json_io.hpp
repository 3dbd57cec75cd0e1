#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "pead/backtest.hpp"
#include "pead/features.hpp"
#include "pead/ga.hpp"
#include "pead/gbt.hpp"
#include "pead/synth.hpp"

// JSON conversions. Readers accept partial objects (absent keys keep their
// defaults) and throw ConfigError on unknown keys or mistyped values.

namespace pead {
void to_json(nlohmann::json& j, const FiscalQuarter& q);
void from_json(const nlohmann::json& j, FiscalQuarter& q);
}  // namespace pead

namespace pead::features {
void to_json(nlohmann::json& j, const FeatureSpec& s);
void from_json(const nlohmann::json& j, FeatureSpec& s);
}  // namespace pead::features

namespace pead::gbt {
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const Ensemble& m);
void from_json(const nlohmann::json& j, Ensemble& m);
}  // namespace pead::gbt

namespace pead::ga {
void to_json(nlohmann::json& j, const GeneRange& g);
void from_json(const nlohmann::json& j, GeneRange& g);
void to_json(nlohmann::json& j, const SearchSpace& s);
void from_json(const nlohmann::json& j, SearchSpace& s);
void to_json(nlohmann::json& j, const GaConfig& c);
void from_json(const nlohmann::json& j, GaConfig& c);
}  // namespace pead::ga

namespace pead::synth {
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
}  // namespace pead::synth

namespace pead::backtest {
void to_json(nlohmann::json& j, const Selector& s);
void from_json(const nlohmann::json& j, Selector& s);
}  // namespace pead::backtest

namespace pead::json_io {

/// Parses a JSON file; throws ConfigError with the path on failure.
nlohmann::json read_file(const std::string& path);
void write_file(const nlohmann::json& j, const std::string& path);

}  // namespace pead::json_io
