#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbc/error.hpp"
#include "sbc/model.hpp"
#include "sbc/random.hpp"

namespace sbc {

struct SamplerConfig {
  int chains = 4;
  int warmup_draws = 1000;
  int keep_draws = 1000;
  double target_accept = 0.99;
  int max_leapfrog_steps = 256;
  double path_length_jitter = 0.5; ///< L drawn uniformly in base*(1 -/+ jitter)
  double integration_time = 2.0;   ///< base L = ceil(integration_time / step)
  double divergence_threshold = 50.0;
  double init_radius = 2.0;        ///< init uniform(-r, r) per unconstrained coordinate
  double fixed_step_size = 0.0;    ///< > 0 disables step-size adaptation
  std::uint64_t seed = 1;

  /// Throws ConfigError on invalid values.
  void validate() const;
};

/// Post-warmup draws of one chain on the unconstrained scale.
struct Chain {
  Eigen::MatrixXd draws;        ///< keep_draws x dim
  Eigen::VectorXd accept_stats; ///< per kept transition
  std::vector<bool> divergent;  ///< per kept transition
  int divergence_count = 0;
  int warmup_divergences = 0;
  int nonfinite_rejections = 0; ///< proposals rejected for a non-finite density
  double step_size = 0.0;
  Eigen::VectorXd mass_diag;    ///< diagonal of the mass matrix
  long leapfrog_steps = 0;

  double mean_accept() const { return accept_stats.size() ? accept_stats.mean() : 0.0; }
};

/**
 * Dual-averaging step-size adaptation (Hoffman and Gelman, 2014).
 *
 * update() consumes one acceptance statistic and returns the step size to
 * use next; final() is the averaged iterate to freeze after warmup.
 */
template <typename S>
class DualAverage {
public:
  DualAverage(S step_init, S target, S t0 = 10, S gamma = 0.05, S kappa = 0.75)
      : target_(target), t0_(t0), gamma_(gamma), kappa_(kappa) {
    restart(step_init);
  }

  void restart(S step_init) {
    mu_ = std::log(S(10) * step_init);
    log_step_ = std::log(step_init);
    log_step_bar_ = 0;
    h_bar_ = 0;
    m_ = 0;
  }

  S update(S accept_stat) {
    ++m_;
    const S m = static_cast<S>(m_);
    const S w = S(1) / (m + t0_);
    h_bar_ = (S(1) - w) * h_bar_ + w * (target_ - accept_stat);
    log_step_ = mu_ - std::sqrt(m) / gamma_ * h_bar_;
    const S decay = std::pow(m, -kappa_);
    log_step_bar_ = decay * log_step_ + (S(1) - decay) * log_step_bar_;
    return std::exp(log_step_);
  }

  S current() const { return std::exp(log_step_); }
  S final() const { return m_ > 0 ? std::exp(log_step_bar_) : current(); }

private:
  S target_, t0_, gamma_, kappa_;
  S mu_{}, log_step_{}, log_step_bar_{}, h_bar_{};
  long m_ = 0;
};

/// Per-step hook: returning false stops the trajectory.
struct NoObserver {
  bool operator()(const Eigen::VectorXd &, const Eigen::VectorXd &, double) const { return true; }
};

/**
 * `steps` leapfrog steps for H(q, p) = -log pi(q) + p' M^-1 p / 2 with a
 * diagonal inverse mass. `grad_fn(q, g)` returns log pi(q) and fills g.
 * On entry `grad`/`log_density` must hold the values at `q`.
 *
 * Returns false (the divergence signal) when the state becomes non-finite
 * or the observer stops the trajectory.
 */
template <typename GradFn, typename Observer = NoObserver>
bool leapfrog(GradFn &&grad_fn, Eigen::VectorXd &q, Eigen::VectorXd &p, Eigen::VectorXd &grad,
              double &log_density, double eps, int steps, const Eigen::VectorXd &inv_mass,
              Observer &&observer = {}) {
  for (int l = 0; l < steps; ++l) {
    p.noalias() += (0.5 * eps) * grad;
    q.array() += eps * inv_mass.array() * p.array();
    log_density = grad_fn(static_cast<const Eigen::VectorXd &>(q), grad);
    if (!std::isfinite(log_density) || !grad.allFinite()) return false;
    p.noalias() += (0.5 * eps) * grad;
    if (!p.allFinite() || !q.allFinite()) return false;
    if (!observer(q, p, log_density)) return false;
  }
  return true;
}

/// Unit-mass convenience form returning the new (q, p).
template <typename GradFn>
std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(GradFn &&grad_fn, Eigen::VectorXd q,
                                                     Eigen::VectorXd p, double eps, int steps) {
  if (!(eps > 0.0) || steps < 1) throw Error("leapfrog: eps must be positive and steps >= 1");
  Eigen::VectorXd grad(q.size());
  double lp = grad_fn(static_cast<const Eigen::VectorXd &>(q), grad);
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(q.size());
  if (!std::isfinite(lp) || !leapfrog(grad_fn, q, p, grad, lp, eps, steps, unit)) {
    q.setConstant(std::numeric_limits<double>::quiet_NaN());
    p.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return {q, p};
}

/// Static-trajectory HMC with jittered path length, dual-averaging step size
/// and diagonal mass adaptation.
Chain hmc_chain(const LogDensity &target, const SamplerConfig &config, RandomStream &rng);

/// Gaussian random-walk Metropolis with Robbins-Monro scale adaptation
/// towards 0.234 acceptance. `step_size` of the result is the adapted scale.
Chain rwm_chain(const LogDensity &target, const SamplerConfig &config, RandomStream &rng);

enum class SamplerKind { Hmc, Rwm };

/// config.chains independent chains; chain c draws from rng.substream(c).
std::vector<Chain> run_chains(SamplerKind kind, const LogDensity &target,
                              const SamplerConfig &config, const RandomStream &rng);

// ---------------------------------------------------------------------------
// Diagnostics

/// Rank-normalized split R-hat of one quantity. Each entry is one chain.
double split_rhat(const std::vector<Eigen::VectorXd> &chains);
double split_rhat(const std::vector<Chain> &chains, Eigen::Index quantity);

/// Rank-normalized bulk effective sample size (split chains, Geyer initial
/// monotone sequence).
double ess_bulk(const std::vector<Eigen::VectorXd> &chains);
double ess_bulk(const std::vector<Chain> &chains, Eigen::Index quantity);

/// Normal scores of pooled ranks (average ranks for ties), returned per chain.
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd> &chains);

/// Stride = floor(total / S); keeps the last row of each of the first S blocks.
std::vector<Eigen::Index> thin_indices(Eigen::Index total, Eigen::Index target_count);
Eigen::MatrixXd thin(const Eigen::MatrixXd &draws, Eigen::Index target_count);

/// Draws of all chains stacked chain-major.
Eigen::MatrixXd pool_draws(const std::vector<Chain> &chains);

/// Debug dump: `chain,draw,<names...>,accept,divergent`, unconstrained values.
void write_chain_csv(std::ostream &out, const std::vector<Chain> &chains,
                     const std::vector<std::string> &names);

} // namespace sbc
