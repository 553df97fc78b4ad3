#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbc/error.hpp"

namespace sbc {

enum class Constraint { Real, Positive };

struct ParamInfo {
  std::string name;
  Constraint constraint = Constraint::Real;
};

/// Values together with log |det J| of the unconstrained -> constrained map.
template <typename Scalar = double>
struct Transformed {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;
  Scalar log_jacobian;
};

/// Maps unconstrained coordinates to model-native units. Positive entries use
/// exp, so their Jacobian contribution is the unconstrained value itself.
template <typename Derived>
Transformed<typename Derived::Scalar>
to_constrained(std::span<const Constraint> constraints,
               const Eigen::MatrixBase<Derived> &unconstrained) {
  using Scalar = typename Derived::Scalar;
  Transformed<Scalar> out{unconstrained, Scalar(0)};
  for (Eigen::Index k = 0; k < out.values.size(); ++k) {
    if (constraints[static_cast<std::size_t>(k)] == Constraint::Positive) {
      out.log_jacobian += unconstrained(k);
      out.values(k) = std::exp(unconstrained(k));
    }
  }
  return out;
}

/// Inverse of to_constrained. The returned log_jacobian is that of the
/// forward (to-constrained) map evaluated at the same point.
template <typename Derived>
Transformed<typename Derived::Scalar>
to_unconstrained(std::span<const Constraint> constraints,
                 const Eigen::MatrixBase<Derived> &constrained) {
  using Scalar = typename Derived::Scalar;
  Transformed<Scalar> out{constrained, Scalar(0)};
  for (Eigen::Index k = 0; k < out.values.size(); ++k) {
    if (!std::isfinite(constrained(k)))
      throw Error("to_unconstrained: non-finite value at index " + std::to_string(k));
    if (constraints[static_cast<std::size_t>(k)] == Constraint::Positive) {
      if (!(constrained(k) > Scalar(0)))
        throw Error("to_unconstrained: value at index " + std::to_string(k) +
                    " is outside the positive support");
      out.values(k) = std::log(constrained(k));
      out.log_jacobian += out.values(k);
    }
  }
  return out;
}

/// Named parameter vector carrying both coordinate systems.
struct ParamVec {
  std::vector<std::string> names;
  Eigen::VectorXd constrained;
  Eigen::VectorXd unconstrained;

  Eigen::Index size() const { return constrained.size(); }

  /// Throws if `name` is not a parameter.
  double operator[](const std::string &name) const;
};

ParamVec make_param_vec(std::span<const ParamInfo> params,
                        const Eigen::VectorXd &constrained);

std::vector<Constraint> constraints_of(std::span<const ParamInfo> params);

} // namespace sbc
