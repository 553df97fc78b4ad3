#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbc/backend.hpp"
#include "sbc/model.hpp"

namespace sbc {

/// Which data the joint-log-likelihood quantity conditions on in posterior
/// SBC: the augmented set (observed + simulated) or the simulated part only.
enum class LoglikConditioning { Augmented, SimulatedOnly };

struct SbcConfig {
  int iterations = 100;                     ///< N
  int ranks_S = 100;                        ///< draws kept after thinning
  std::vector<std::string> test_quantities; ///< empty: model defaults
  double base_data_fraction = 1.0;
  LoglikConditioning loglik_conditioning = LoglikConditioning::Augmented;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
};

enum class IterationStatus { Ok, Flagged, Failed };

std::string to_string(IterationStatus s);
IterationStatus parse_status(const std::string &s);

struct IterationResult {
  int iter = 0;
  IterationStatus status = IterationStatus::Ok;
  std::string failure; ///< cause when status == Failed
  ParamVec theta_prime;
  std::vector<std::pair<std::string, int>> ranks; ///< in test-quantity order
  double rhat_max = std::numeric_limits<double>::quiet_NaN();
  double ess_min = std::numeric_limits<double>::quiet_NaN();
  int divergences = 0;
  std::string seed_path;
  double wall_seconds = 0.0;

  std::optional<int> rank(const std::string &quantity) const;
};

/// Ranks of all non-failed iterations, per test quantity.
struct RankEnsemble {
  int S = 0;
  std::vector<std::string> quantities;
  std::vector<int> iterations;                 ///< iteration index per entry
  std::vector<IterationStatus> status;         ///< per entry (ok or flagged)
  std::vector<std::vector<int>> ranks;         ///< [quantity][entry]
  int failed = 0;

  std::size_t size() const { return iterations.size(); }
  const std::vector<int> &ranks_of(const std::string &quantity) const;
  RankEnsemble without_flagged() const;
};

RankEnsemble assemble_ensemble(std::span<const IterationResult> results, int S,
                               const std::vector<std::string> &quantities);

/// #{draws < value} plus a uniform pick among {0..#ties}; result in [0, S].
int rank_of(double value, std::span<const double> draws, RandomStream &rng);

struct QuantityValues {
  std::string name;
  double true_value = 0.0;
  Eigen::VectorXd draw_values;
};

/// Parameter quantities pass values through; "loglik" evaluates
/// log p(conditioning_data | .) at theta and at every draw (rows of `draws`).
std::vector<QuantityValues> evaluate_test_quantities(const Model &model,
                                                     const Eigen::VectorXd &theta,
                                                     const Eigen::MatrixXd &draws,
                                                     const Dataset &conditioning_data,
                                                     const std::vector<std::string> &quantities);

/// Test quantities resolved against the model (config list or defaults).
std::vector<std::string> resolve_quantities(const Model &model, const SbcConfig &config);

IterationResult prior_sbc_iteration(const Model &model, const InferenceBackend &backend,
                                    const SbcConfig &config, int iteration);

struct BasePosterior {
  std::vector<Eigen::VectorXd> draws; ///< N constrained parameter vectors
  Dataset data;                       ///< observed data after base_data_fraction
  bool has_diagnostics = false;
  double rhat_max = std::numeric_limits<double>::quiet_NaN();
  double ess_min = std::numeric_limits<double>::quiet_NaN();
  int divergences = 0;
  std::vector<std::string> warnings;
};

/// Fits the observed-data posterior and thins it to exactly N draws. Throws
/// when the bulk ESS of any parameter is below N.
BasePosterior base_posterior(const Model &model, const Dataset &y_obs,
                             const InferenceBackend &backend, const SbcConfig &config);

/// One posterior-SBC iteration: simulate from theta_prime, refit on
/// concat(y_obs, y_i), thin, rank.
IterationResult posterior_sbc_iteration(const Model &model, const Dataset &y_obs,
                                        const Eigen::VectorXd &theta_prime,
                                        const InferenceBackend &backend, const SbcConfig &config,
                                        int iteration);

/// Runs body(i) for every index on up to `workers` threads. Results come
/// back in index order; `sink` is called under a lock as each one completes.
std::vector<IterationResult>
execute_iterations(const std::vector<int> &indices, int workers,
                   const std::function<IterationResult(int)> &body,
                   const std::function<void(const IterationResult &)> &sink = {});

RankEnsemble prior_sbc(const Model &model, const InferenceBackend &backend,
                       const SbcConfig &config, std::vector<IterationResult> *results = nullptr);

RankEnsemble posterior_sbc(const Model &model, const Dataset &y_obs,
                           const InferenceBackend &backend, const InferenceBackend &base_backend,
                           const SbcConfig &config, std::vector<IterationResult> *results = nullptr);

} // namespace sbc
