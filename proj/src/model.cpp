#include "sbc/model.hpp"

#include <limits>

#include "sbc/gradient.hpp"

namespace sbc {

double ParamVec::operator[](const std::string &name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return constrained(static_cast<Eigen::Index>(k));
  throw Error("unknown parameter '" + name + "'");
}

std::vector<Constraint> constraints_of(std::span<const ParamInfo> params) {
  std::vector<Constraint> out;
  out.reserve(params.size());
  for (const auto &p : params) out.push_back(p.constraint);
  return out;
}

ParamVec make_param_vec(std::span<const ParamInfo> params, const Eigen::VectorXd &constrained) {
  if (static_cast<std::size_t>(constrained.size()) != params.size())
    throw Error("parameter vector has wrong length");
  ParamVec pv;
  for (const auto &p : params) pv.names.push_back(p.name);
  pv.constrained = constrained;
  pv.unconstrained = to_unconstrained(constraints_of(params), constrained).values;
  return pv;
}

std::unique_ptr<LogDensity> Model::posterior(const Dataset &data) const {
  return std::make_unique<FiniteDiffPosterior>(*this, data);
}

std::vector<std::string> Model::default_test_quantities() const {
  auto q = parameter_names();
  q.push_back(kLoglikQuantity);
  return q;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (const auto &p : parameters()) names.push_back(p.name);
  return names;
}

Eigen::Index Model::index_of(const std::string &name) const {
  const auto &ps = parameters();
  for (std::size_t k = 0; k < ps.size(); ++k)
    if (ps[k].name == name) return static_cast<Eigen::Index>(k);
  return -1;
}

FiniteDiffPosterior::FiniteDiffPosterior(const Model &model, Dataset data)
    : model_(model), data_(std::move(data)), constraints_(model.constraints()) {}

double FiniteDiffPosterior::log_density(const Eigen::VectorXd &u) const {
  if (!u.allFinite()) return -std::numeric_limits<double>::infinity();
  const auto t = to_constrained(constraints_, u);
  const double lp = model_.log_prior(t.values);
  if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
  const double ll = model_.log_likelihood(t.values, data_);
  const double total = lp + ll + t.log_jacobian;
  return std::isfinite(total) ? total : -std::numeric_limits<double>::infinity();
}

double FiniteDiffPosterior::log_density_gradient(const Eigen::VectorXd &u,
                                                 Eigen::VectorXd &grad) const {
  const double value = log_density(u);
  if (!std::isfinite(value)) return value;
  try {
    grad = finite_diff_grad([this](const Eigen::VectorXd &x) { return log_density(x); }, u);
  } catch (const FiniteDiffError &) {
    return -std::numeric_limits<double>::infinity();
  }
  return value;
}

} // namespace sbc
