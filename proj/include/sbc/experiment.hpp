#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "sbc/backend.hpp"
#include "sbc/dataset.hpp"
#include "sbc/model.hpp"
#include "sbc/sbc_engine.hpp"
#include "sbc/uniformity.hpp"

namespace sbc {

enum class SbcMode { Prior, Posterior };

struct ModelSpec {
  std::string id; ///< conjugate-normal | hierarchical-centered | hierarchical-noncentered | lotka-volterra
  nlohmann::json options = nlohmann::json::object();
};

struct BackendSpec {
  std::string kind = "hmc"; ///< hmc | rwm | exact | shifted
  double shift_sd = 0.5;    ///< shifted only
  int draws = 1000;         ///< exact and shifted only
  SamplerConfig sampler;
};

struct DataSpec {
  enum class Source { None, Path, Empty, Generate };
  Source source = Source::None;
  std::filesystem::path path;
  std::uint64_t generate_seed = 1;
  std::map<std::string, double> generate_params; ///< empty: draw from the prior
};

/// A parsed experiment. `canonical` keeps the normalized JSON used for hashing.
struct ExperimentConfig {
  SbcMode mode = SbcMode::Prior;
  ModelSpec model;
  DataSpec data;
  BackendSpec backend;
  BackendSpec base_backend;
  SbcConfig sbc;
  std::filesystem::path output_dir;
  bool plots = true;
  double band_coverage = 0.95;
  BandOptions band;
  nlohmann::json canonical;
};

/// Parses and validates; relative paths resolve against `base_dir`. Throws
/// ConfigError naming the offending field.
ExperimentConfig parse_experiment_config(const nlohmann::json &j,
                                         const std::filesystem::path &base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path &path);

/// Applies command-line overrides and re-validates.
void override_seed(ExperimentConfig &config, std::uint64_t seed);
void override_workers(ExperimentConfig &config, int workers);

/// 16 hex digits of FNV-1a over the canonical JSON without workers and output_dir.
std::string config_hash(const ExperimentConfig &config);

std::unique_ptr<Model> make_model(const ModelSpec &spec);
std::unique_ptr<InferenceBackend> make_backend(const BackendSpec &spec);

/// Observed data for posterior mode: read, empty, or generated from the model.
Dataset observed_data(const ExperimentConfig &config, const Model &model);

} // namespace sbc
