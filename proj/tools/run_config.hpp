#pragma once

// JSON run configuration for the lwr command-line tool.
//
// A user config is merged over a preset ("calibration" or "accident"), and
// the merged document is what gets written to manifest.json. Feeding a
// manifest back in resolves to the same document, so reruns are exact.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lwr/filter.hpp"
#include "lwr/scenarios.hpp"
#include "lwr/sensor_csv.hpp"

namespace lwr::cli {

using nlohmann::json;

/// Bad configuration content (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File-system or parse failure (exit code 1).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json load_json(const std::filesystem::path& path);

/// Unwraps a manifest ({"command", "config"}) or returns the document as is.
json config_body(const json& document, const std::string& command);

json resolve_scenario(const json& user);
ScenarioConfig scenario_from_json(const json& resolved, std::uint64_t seed, CflPolicy policy);

/// Filter-side settings; defaults depend on the scenario kind and noise.
json resolve_model(const json& user, const json& scenario);

struct ModelSettings {
  std::size_t particles = 1;
  ParameterPrior prior;
  JitterSpec jitter;
  RegularizationSpec regularization;
  NoiseSpec noise;
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  double credible_mass = 0.95;
};

ModelSettings model_from_json(const json& resolved);

/// CSV mappings default to the sensor naming used by `lwr simulate`.
json resolve_data(const json& user, const json& scenario);
SensorMapping mapping_from_json(const json& resolved, const RoadGrid& grid);

json resolve_mixture(const json& user);

struct MixtureSettings {
  FundamentalDiagram fd = FundamentalDiagram::from_vph(1600.0, 0.025, 0.2);
  TruncatedNormalSpec left;
  TruncatedNormalSpec right;
  std::size_t samples = 1000;
  double min_mode_mass = 0.1;
};

MixtureSettings mixture_from_json(const json& resolved);

}  // namespace lwr::cli
