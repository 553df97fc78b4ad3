#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "sbc/error.hpp"

namespace sbc {

/// Central finite differences with per-coordinate step 1e-6 * max(1, |x_k|).
/// Throws FiniteDiffError naming the coordinate whose probe was non-finite.
template <typename F>
Eigen::VectorXd finite_diff_grad(F &&logdensity, const Eigen::VectorXd &x) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(k)));
    probe(k) = x(k) + h;
    const double up = logdensity(static_cast<const Eigen::VectorXd &>(probe));
    probe(k) = x(k) - h;
    const double down = logdensity(static_cast<const Eigen::VectorXd &>(probe));
    probe(k) = x(k);
    if (!std::isfinite(up) || !std::isfinite(down))
      throw FiniteDiffError(static_cast<std::size_t>(k),
                            "finite_diff_grad: non-finite log density probing coordinate " +
                                std::to_string(k));
    grad(k) = (up - down) / (2.0 * h);
  }
  return grad;
}

} // namespace sbc
