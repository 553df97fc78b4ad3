#pragma once

#include <limits>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "sbc/model.hpp"
#include "sbc/sampler.hpp"

namespace sbc {

/// Posterior draws from one inference run, in constrained coordinates.
struct FitResult {
  Eigen::MatrixXd draws; ///< rows are draws (chain-major for MCMC)
  bool has_diagnostics = false;
  double rhat_max = std::numeric_limits<double>::quiet_NaN();
  double ess_min = std::numeric_limits<double>::quiet_NaN();
  int divergences = 0;
  int nonfinite_rejections = 0;
};

/// The inference algorithm under test.
class InferenceBackend {
public:
  virtual ~InferenceBackend() = default;
  virtual std::string name() const = 0;
  virtual FitResult fit(const Model &model, const Dataset &data, RandomStream &rng) const = 0;

  /// Exact backends draw independently, so base-posterior draw i can come
  /// from its own keyed stream instead of a thinned chain.
  virtual bool exact() const { return false; }
  virtual Eigen::VectorXd exact_draw(const Model &model, const Dataset &data,
                                     RandomStream &rng) const;
};

/// HMC or random-walk Metropolis over Model::posterior().
class McmcBackend final : public InferenceBackend {
public:
  McmcBackend(SamplerKind kind, SamplerConfig config);
  std::string name() const override { return kind_ == SamplerKind::Hmc ? "hmc" : "rwm"; }
  FitResult fit(const Model &model, const Dataset &data, RandomStream &rng) const override;
  const SamplerConfig &config() const { return config_; }

private:
  SamplerKind kind_;
  SamplerConfig config_;
};

/// I.i.d. draws from the closed-form posterior of ConjugateNormalModel,
/// optionally shifted by `shift_sd` posterior standard deviations.
class ConjugateExactBackend final : public InferenceBackend {
public:
  explicit ConjugateExactBackend(int draws = 1000, double shift_sd = 0.0);
  std::string name() const override { return shift_sd_ == 0.0 ? "exact" : "shifted"; }
  FitResult fit(const Model &model, const Dataset &data, RandomStream &rng) const override;
  bool exact() const override { return true; }
  Eigen::VectorXd exact_draw(const Model &model, const Dataset &data,
                             RandomStream &rng) const override;

private:
  int draws_;
  double shift_sd_;
};

/// Max split R-hat and min bulk ESS over all parameters. Undefined
/// diagnostics (e.g. a parameter that never moved) yield +inf / 0.
void summarize_chains(const std::vector<Chain> &chains, double &rhat_max, double &ess_min);

} // namespace sbc
