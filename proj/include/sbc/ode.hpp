#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbc/error.hpp"

namespace sbc {

template <typename State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
};

/// Accepts any finite state.
struct FiniteState {
  template <typename State>
  bool operator()(const State &y) const {
    return y.allFinite();
  }
};

/// Accepts finite, strictly positive states (population models).
struct PositiveState {
  template <typename State>
  bool operator()(const State &y) const {
    return y.allFinite() && (y.array() > 0).all();
  }
};

/// Number of h-steps from t0 to t; throws unless t - t0 is an integer
/// multiple of h within 1e-9.
inline long step_count(double t0, double t, double h) {
  const double steps = (t - t0) / h;
  const double rounded = std::round(steps);
  if (std::abs(rounded * h - (t - t0)) > 1e-9)
    throw Error("rk4_solve: grid point " + std::to_string(t) +
                " is not an integer multiple of the step from t0");
  return static_cast<long>(rounded);
}

/**
 * Classical fixed-step fourth-order Runge-Kutta.
 *
 * `t_grid[0]` is the initial time and the returned trajectory is sampled at
 * every grid point (the first state is `y0`). `rhs(t, y)` returns dy/dt.
 * After every step the state must satisfy `valid`; otherwise an
 * IntegrationFailure carrying the step's end time is thrown.
 */
template <typename State, typename Rhs, typename Valid = FiniteState>
Trajectory<State> rk4_solve(Rhs &&rhs, const State &y0, std::span<const double> t_grid,
                            double h, Valid valid = {}) {
  if (!(h > 0.0)) throw Error("rk4_solve: step must be positive");
  if (t_grid.empty()) throw Error("rk4_solve: empty time grid");
  if (!valid(y0)) throw IntegrationFailure(t_grid[0], "rk4_solve: invalid initial state");

  Trajectory<State> out;
  out.times.assign(t_grid.begin(), t_grid.end());
  out.states.reserve(t_grid.size());

  const double t0 = t_grid[0];
  State y = y0;
  long done = 0;
  out.states.push_back(y);
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    if (!(t_grid[k] > t_grid[k - 1])) throw Error("rk4_solve: time grid must be increasing");
    const long target = step_count(t0, t_grid[k], h);
    for (; done < target; ++done) {
      const double t = t0 + static_cast<double>(done) * h;
      const State k1 = rhs(t, y);
      const State k2 = rhs(t + 0.5 * h, State(y + (0.5 * h) * k1));
      const State k3 = rhs(t + 0.5 * h, State(y + (0.5 * h) * k2));
      const State k4 = rhs(t + h, State(y + h * k3));
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!valid(y))
        throw IntegrationFailure(t0 + static_cast<double>(done + 1) * h,
                                 "rk4_solve: state left the valid region at t = " +
                                     std::to_string(t0 + static_cast<double>(done + 1) * h));
    }
    out.states.push_back(y);
  }
  return out;
}

} // namespace sbc
