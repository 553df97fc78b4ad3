#include "sbc/backend.hpp"

#include "sbc/models.hpp"

namespace sbc {

namespace {
const ConjugateNormalModel &as_conjugate(const Model &model) {
  const auto *m = dynamic_cast<const ConjugateNormalModel *>(&model);
  if (!m) throw ConfigError("the exact backend requires the conjugate-normal model");
  return *m;
}
} // namespace

Eigen::VectorXd InferenceBackend::exact_draw(const Model &, const Dataset &, RandomStream &) const {
  throw Error("backend '" + name() + "' cannot produce exact draws");
}

McmcBackend::McmcBackend(SamplerKind kind, SamplerConfig config)
    : kind_(kind), config_(std::move(config)) {
  config_.validate();
}

void summarize_chains(const std::vector<Chain> &chains, double &rhat_max, double &ess_min) {
  rhat_max = 0.0;
  ess_min = std::numeric_limits<double>::infinity();
  if (chains.empty()) return;
  for (Eigen::Index q = 0; q < chains.front().draws.cols(); ++q) {
    try {
      rhat_max = std::max(rhat_max, split_rhat(chains, q));
      ess_min = std::min(ess_min, ess_bulk(chains, q));
    } catch (const DiagnosticError &) {
      rhat_max = std::numeric_limits<double>::infinity();
      ess_min = 0.0;
    }
  }
}

FitResult McmcBackend::fit(const Model &model, const Dataset &data, RandomStream &rng) const {
  const auto target = model.posterior(data);
  const auto chains = run_chains(kind_, *target, config_, rng);
  FitResult out;
  const auto constraints = model.constraints();
  Eigen::MatrixXd pooled = pool_draws(chains);
  for (Eigen::Index r = 0; r < pooled.rows(); ++r)
    pooled.row(r) = to_constrained(constraints, pooled.row(r).transpose()).values.transpose();
  out.draws = std::move(pooled);
  out.has_diagnostics = true;
  summarize_chains(chains, out.rhat_max, out.ess_min);
  for (const auto &c : chains) {
    out.divergences += c.divergence_count;
    out.nonfinite_rejections += c.nonfinite_rejections;
  }
  return out;
}

ConjugateExactBackend::ConjugateExactBackend(int draws, double shift_sd)
    : draws_(draws), shift_sd_(shift_sd) {
  if (draws_ < 1) throw ConfigError("exact backend needs at least one draw");
}

FitResult ConjugateExactBackend::fit(const Model &model, const Dataset &data,
                                     RandomStream &rng) const {
  const auto &m = as_conjugate(model);
  const auto post = m.exact_posterior(data);
  FitResult out;
  out.draws.resize(draws_, 1);
  for (int i = 0; i < draws_; ++i) out.draws(i, 0) = rng.normal(post.mean + shift_sd_ * post.sd, post.sd);
  return out;
}

Eigen::VectorXd ConjugateExactBackend::exact_draw(const Model &model, const Dataset &data,
                                                  RandomStream &rng) const {
  const auto &m = as_conjugate(model);
  if (shift_sd_ == 0.0) return Eigen::VectorXd::Constant(1, m.exact_draw(data, rng));
  const auto post = m.exact_posterior(data);
  return Eigen::VectorXd::Constant(1, rng.normal(post.mean + shift_sd_ * post.sd, post.sd));
}

} // namespace sbc
