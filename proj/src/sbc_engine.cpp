#include "sbc/sbc_engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace sbc {

namespace {

RandomStream stream(const SbcConfig &config, int iteration, StreamRole role) {
  return RandomStream::keyed(config.seed, {static_cast<std::uint64_t>(iteration),
                                           static_cast<std::uint64_t>(role)});
}

bool is_flagged(const FitResult &fit, int S) {
  return fit.has_diagnostics && (!(fit.rhat_max <= 1.01) || !(fit.ess_min >= S));
}

// Shared tail of prior and posterior iterations: simulate from theta',
// refit on concat(y_obs, y_i), thin and rank.
IterationResult run_iteration(const Model &model, const Dataset &y_obs,
                              const Eigen::VectorXd &theta_prime, const InferenceBackend &backend,
                              const SbcConfig &config, int iteration) {
  const auto start = std::chrono::steady_clock::now();
  IterationResult res;
  res.iter = iteration;
  res.seed_path = seed_path(config.seed, {static_cast<std::uint64_t>(iteration)});
  try {
    res.theta_prime = model.param_vec(theta_prime);
    RandomStream sim_rng = stream(config, iteration, StreamRole::Simulate);
    const Dataset y_sim = model.simulate(theta_prime, sim_rng);
    const Dataset augmented = concat(y_obs, y_sim);

    RandomStream fit_rng = stream(config, iteration, StreamRole::Fit);
    const FitResult fit = backend.fit(model, augmented, fit_rng);
    const Eigen::MatrixXd draws = thin(fit.draws, config.ranks_S);

    const Dataset &loglik_data =
        config.loglik_conditioning == LoglikConditioning::Augmented ? augmented : y_sim;
    const auto quantities = resolve_quantities(model, config);
    const auto values = evaluate_test_quantities(model, theta_prime, draws, loglik_data, quantities);

    RandomStream rank_rng = stream(config, iteration, StreamRole::Rank);
    for (const auto &q : values)
      res.ranks.emplace_back(q.name, rank_of(q.true_value,
                                             std::span<const double>(q.draw_values.data(),
                                                                     static_cast<std::size_t>(q.draw_values.size())),
                                             rank_rng));
    res.rhat_max = fit.rhat_max;
    res.ess_min = fit.ess_min;
    res.divergences = fit.divergences;
    res.status = is_flagged(fit, config.ranks_S) ? IterationStatus::Flagged : IterationStatus::Ok;
  } catch (const std::exception &e) {
    res.status = IterationStatus::Failed;
    res.failure = e.what();
    res.ranks.clear();
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

} // namespace

void SbcConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (ranks_S < 10) throw ConfigError("ranks_S must be at least 10");
  if (!(base_data_fraction > 0.0 && base_data_fraction <= 1.0))
    throw ConfigError("base_data_fraction must lie in (0, 1]");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

std::string to_string(IterationStatus s) {
  switch (s) {
  case IterationStatus::Ok: return "ok";
  case IterationStatus::Flagged: return "diagnostics-flagged";
  case IterationStatus::Failed: return "failed";
  }
  return "failed";
}

IterationStatus parse_status(const std::string &s) {
  if (s == "ok") return IterationStatus::Ok;
  if (s == "diagnostics-flagged") return IterationStatus::Flagged;
  if (s == "failed") return IterationStatus::Failed;
  throw Error("unknown iteration status '" + s + "'");
}

std::optional<int> IterationResult::rank(const std::string &quantity) const {
  for (const auto &[name, r] : ranks)
    if (name == quantity) return r;
  return std::nullopt;
}

const std::vector<int> &RankEnsemble::ranks_of(const std::string &quantity) const {
  for (std::size_t q = 0; q < quantities.size(); ++q)
    if (quantities[q] == quantity) return ranks[q];
  throw Error("ensemble has no quantity '" + quantity + "'");
}

RankEnsemble RankEnsemble::without_flagged() const {
  RankEnsemble out;
  out.S = S;
  out.quantities = quantities;
  out.failed = failed;
  out.ranks.resize(quantities.size());
  for (std::size_t e = 0; e < iterations.size(); ++e) {
    if (status[e] != IterationStatus::Ok) continue;
    out.iterations.push_back(iterations[e]);
    out.status.push_back(status[e]);
    for (std::size_t q = 0; q < quantities.size(); ++q) out.ranks[q].push_back(ranks[q][e]);
  }
  return out;
}

RankEnsemble assemble_ensemble(std::span<const IterationResult> results, int S,
                               const std::vector<std::string> &quantities) {
  RankEnsemble ens;
  ens.S = S;
  ens.quantities = quantities;
  ens.ranks.resize(quantities.size());
  std::vector<const IterationResult *> sorted;
  for (const auto &r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto *a, const auto *b) { return a->iter < b->iter; });
  for (const auto *r : sorted) {
    if (r->status == IterationStatus::Failed) {
      ++ens.failed;
      continue;
    }
    ens.iterations.push_back(r->iter);
    ens.status.push_back(r->status);
    for (std::size_t q = 0; q < quantities.size(); ++q) {
      const auto rank = r->rank(quantities[q]);
      if (!rank) throw Error("iteration " + std::to_string(r->iter) + " lacks quantity " + quantities[q]);
      ens.ranks[q].push_back(*rank);
    }
  }
  return ens;
}

int rank_of(double value, std::span<const double> draws, RandomStream &rng) {
  if (!std::isfinite(value)) throw Error("rank_of: non-finite true value");
  if (draws.empty()) throw Error("rank_of: no draws");
  int below = 0;
  int ties = 0;
  for (double d : draws) {
    if (!std::isfinite(d)) throw Error("rank_of: non-finite draw");
    if (d < value)
      ++below;
    else if (d == value)
      ++ties;
  }
  if (ties > 0) below += static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ties) + 1));
  return below;
}

std::vector<std::string> resolve_quantities(const Model &model, const SbcConfig &config) {
  auto q = config.test_quantities.empty() ? model.default_test_quantities() : config.test_quantities;
  for (const auto &name : q)
    if (name != kLoglikQuantity && model.index_of(name) < 0)
      throw ConfigError("unknown test quantity '" + name + "' for model " + model.id());
  return q;
}

std::vector<QuantityValues> evaluate_test_quantities(const Model &model,
                                                     const Eigen::VectorXd &theta,
                                                     const Eigen::MatrixXd &draws,
                                                     const Dataset &conditioning_data,
                                                     const std::vector<std::string> &quantities) {
  if (draws.rows() == 0) throw Error("evaluate_test_quantities: no draws");
  std::vector<QuantityValues> out;
  for (const auto &name : quantities) {
    QuantityValues qv;
    qv.name = name;
    if (name == kLoglikQuantity) {
      qv.true_value = model.log_likelihood(theta, conditioning_data);
      qv.draw_values.resize(draws.rows());
      for (Eigen::Index s = 0; s < draws.rows(); ++s)
        qv.draw_values(s) = model.log_likelihood(draws.row(s).transpose(), conditioning_data);
    } else {
      const Eigen::Index k = model.index_of(name);
      if (k < 0) throw ConfigError("unknown test quantity '" + name + "'");
      qv.true_value = theta(k);
      qv.draw_values = draws.col(k);
    }
    out.push_back(std::move(qv));
  }
  return out;
}

IterationResult prior_sbc_iteration(const Model &model, const InferenceBackend &backend,
                                    const SbcConfig &config, int iteration) {
  Eigen::VectorXd theta;
  try {
    RandomStream prior_rng = stream(config, iteration, StreamRole::Prior);
    theta = model.prior_sample(prior_rng);
  } catch (const std::exception &e) {
    IterationResult res;
    res.iter = iteration;
    res.status = IterationStatus::Failed;
    res.failure = e.what();
    return res;
  }
  return run_iteration(model, model.empty_data(), theta, backend, config, iteration);
}

BasePosterior base_posterior(const Model &model, const Dataset &y_obs,
                             const InferenceBackend &backend, const SbcConfig &config) {
  BasePosterior base;
  base.data = leading_fraction(y_obs, config.base_data_fraction);
  if (base.data.kind == DataKind::Grouped) base.data.groups = std::max(base.data.groups, model.empty_data().groups);
  const int n = config.iterations;
  if (backend.exact()) {
    // Draw i uses the same stream as prior-SBC iteration i's prior draw, so
    // empty observed data reproduces prior SBC exactly.
    for (int i = 0; i < n; ++i) {
      RandomStream rng = stream(config, i, StreamRole::Prior);
      base.draws.push_back(backend.exact_draw(model, base.data, rng));
    }
    return base;
  }
  RandomStream rng = RandomStream::keyed(config.seed, {static_cast<std::uint64_t>(StreamRole::BaseFit)});
  const FitResult fit = backend.fit(model, base.data, rng);
  base.has_diagnostics = fit.has_diagnostics;
  base.rhat_max = fit.rhat_max;
  base.ess_min = fit.ess_min;
  base.divergences = fit.divergences;
  if (fit.has_diagnostics && !(fit.ess_min >= n))
    throw Error("base posterior bulk ESS " + std::to_string(fit.ess_min) + " is below N = " +
                std::to_string(n) + "; increase the base sampler's keep_draws");
  if (fit.has_diagnostics && !(fit.rhat_max <= 1.01))
    base.warnings.push_back("base posterior R-hat " + std::to_string(fit.rhat_max) + " exceeds 1.01");
  if (fit.divergences > 0)
    base.warnings.push_back("base posterior had " + std::to_string(fit.divergences) +
                            " divergent transitions");
  const Eigen::MatrixXd thinned = thin(fit.draws, n);
  for (Eigen::Index i = 0; i < thinned.rows(); ++i) base.draws.emplace_back(thinned.row(i).transpose());
  return base;
}

IterationResult posterior_sbc_iteration(const Model &model, const Dataset &y_obs,
                                        const Eigen::VectorXd &theta_prime,
                                        const InferenceBackend &backend, const SbcConfig &config,
                                        int iteration) {
  return run_iteration(model, y_obs, theta_prime, backend, config, iteration);
}

std::vector<IterationResult>
execute_iterations(const std::vector<int> &indices, int workers,
                   const std::function<IterationResult(int)> &body,
                   const std::function<void(const IterationResult &)> &sink) {
  std::vector<IterationResult> results(indices.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;
  const auto work = [&] {
    for (std::size_t k = next++; k < indices.size(); k = next++) {
      results[k] = body(indices[k]);
      if (sink) {
        std::lock_guard lock(sink_mutex);
        sink(results[k]);
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
  if (n_threads == 1 || indices.size() <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, indices.size()); ++t) pool.emplace_back(work);
  }
  return results;
}

RankEnsemble prior_sbc(const Model &model, const InferenceBackend &backend,
                       const SbcConfig &config, std::vector<IterationResult> *results) {
  config.validate();
  const auto quantities = resolve_quantities(model, config);
  std::vector<int> idx(static_cast<std::size_t>(config.iterations));
  for (int i = 0; i < config.iterations; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto res = execute_iterations(idx, config.workers, [&](int i) {
    return prior_sbc_iteration(model, backend, config, i);
  });
  auto ens = assemble_ensemble(res, config.ranks_S, quantities);
  if (ens.size() == 0) throw Error("every SBC iteration failed; first cause: " + res.front().failure);
  if (results) *results = std::move(res);
  return ens;
}

RankEnsemble posterior_sbc(const Model &model, const Dataset &y_obs,
                           const InferenceBackend &backend, const InferenceBackend &base_backend,
                           const SbcConfig &config, std::vector<IterationResult> *results) {
  config.validate();
  const auto quantities = resolve_quantities(model, config);
  const BasePosterior base = base_posterior(model, y_obs, base_backend, config);
  std::vector<int> idx(static_cast<std::size_t>(config.iterations));
  for (int i = 0; i < config.iterations; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto res = execute_iterations(idx, config.workers, [&](int i) {
    return posterior_sbc_iteration(model, base.data, base.draws[static_cast<std::size_t>(i)],
                                   backend, config, i);
  });
  auto ens = assemble_ensemble(res, config.ranks_S, quantities);
  if (ens.size() == 0) throw Error("every SBC iteration failed; first cause: " + res.front().failure);
  if (results) *results = std::move(res);
  return ens;
}

} // namespace sbc
