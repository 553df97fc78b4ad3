#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbc/dataset.hpp"
#include "sbc/param_vec.hpp"
#include "sbc/random.hpp"

namespace sbc {

/// Unnormalized log posterior on the unconstrained scale:
/// log_prior + log_likelihood + log_jacobian.
class LogDensity {
public:
  virtual ~LogDensity() = default;
  virtual Eigen::Index dim() const = 0;

  /// May return -inf (e.g. failed ODE solve); never throws for finite input.
  virtual double log_density(const Eigen::VectorXd &u) const = 0;

  /// Value and gradient. A non-finite return value means the gradient is
  /// unusable and the point must be rejected.
  virtual double log_density_gradient(const Eigen::VectorXd &u,
                                      Eigen::VectorXd &grad) const = 0;
};

/**
 * Generative model contract: prior sampling, simulation and log densities
 * in constrained (model-native) coordinates.
 *
 * Implementations are immutable after construction, so one instance can be
 * shared by any number of concurrent SBC iterations.
 */
class Model {
public:
  virtual ~Model() = default;

  virtual std::string id() const = 0;
  virtual const std::vector<ParamInfo> &parameters() const = 0;
  virtual DataKind data_kind() const = 0;

  virtual Eigen::VectorXd prior_sample(RandomStream &rng) const = 0;
  virtual Dataset simulate(const Eigen::VectorXd &theta, RandomStream &rng) const = 0;

  /// -inf outside the support; never throws for out-of-support input.
  virtual double log_prior(const Eigen::VectorXd &theta) const = 0;

  /// Exact joint log-likelihood including normalizing constants.
  virtual double log_likelihood(const Eigen::VectorXd &theta, const Dataset &data) const = 0;

  /// Posterior target bound to `data`. The default uses finite differences
  /// through log_prior and log_likelihood.
  virtual std::unique_ptr<LogDensity> posterior(const Dataset &data) const;

  /// Parameter names plus "loglik", in the order reports should list them.
  virtual std::vector<std::string> default_test_quantities() const;

  /// An empty dataset with this model's shape metadata.
  virtual Dataset empty_data() const { return Dataset::empty_of(data_kind()); }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(parameters().size()); }
  std::vector<Constraint> constraints() const { return constraints_of(parameters()); }
  std::vector<std::string> parameter_names() const;

  /// -1 when absent.
  Eigen::Index index_of(const std::string &name) const;

  ParamVec param_vec(const Eigen::VectorXd &constrained) const {
    return make_param_vec(parameters(), constrained);
  }
};

/// Quantity name used for the joint log-likelihood test quantity.
inline const std::string kLoglikQuantity = "loglik";

/// Unconstrained posterior assembled from a model's constrained densities.
/// Gradients come from central finite differences.
class FiniteDiffPosterior : public LogDensity {
public:
  FiniteDiffPosterior(const Model &model, Dataset data);

  Eigen::Index dim() const override { return model_.dim(); }
  double log_density(const Eigen::VectorXd &u) const override;
  double log_density_gradient(const Eigen::VectorXd &u, Eigen::VectorXd &grad) const override;

private:
  const Model &model_;
  Dataset data_;
  std::vector<Constraint> constraints_;
};

} // namespace sbc
