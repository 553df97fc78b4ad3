#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sbc {

/// ECDF(u_k) - u_k on a strictly increasing grid in (0, 1].
struct EcdfDiffCurve {
  Eigen::VectorXd grid;
  Eigen::VectorXd values;
  int N = 0;
  int S = 0; ///< 0 for continuous PIT input
};

/// Evaluation grid size for N ranks with resolution S.
inline int band_grid_size(int N, int S) { return N < S + 1 ? N : S + 1; }

/// ECDF difference of normalized PIT values (rank + 1) / (S + 1) on the grid
/// u_k = k / K, K = min(N, S + 1). Comparisons are done in exact integer
/// arithmetic, and the value at u = 1 is exactly zero.
EcdfDiffCurve pit_ecdf_diff(std::span<const int> ranks, int S);

/// ECDF difference of continuous PIT values on a caller-chosen grid.
EcdfDiffCurve pit_ecdf_diff(std::span<const double> pit, std::span<const double> grid);

/// Simultaneous band for N discrete-uniform ranks on {0..S}.
struct Envelope {
  Eigen::VectorXd grid;
  Eigen::VectorXd lower; ///< on the ECDF-difference scale
  Eigen::VectorXd upper;
  Eigen::VectorXi lower_count; ///< integer bounds on N * ECDF
  Eigen::VectorXi upper_count;
  double coverage = 0.95; ///< nominal simultaneous coverage
  double gamma = 0.05;    ///< calibrated pointwise level
  double achieved_coverage = 0.0; ///< on the calibration ensembles
  int N = 0;
  int S = 0;
  int mc_replications = 0;
  std::uint64_t seed = 0;
};

struct BandOptions {
  int mc_replications = 5000;
  double tolerance = 1e-3;
  std::uint64_t seed = 20220415;
};

/**
 * Simultaneous band by Monte Carlo calibration of the pointwise level.
 *
 * M null ensembles of N discrete-uniform ranks are simulated; gamma is
 * bisected so that the fraction of ensembles whose ECDF lies inside the
 * pointwise central binomial intervals at every grid point matches the
 * requested coverage. Results are cached in-process per (N, S, coverage,
 * M, seed).
 */
Envelope simultaneous_band(int N, int S, double coverage = 0.95, BandOptions options = {});

/// Fraction of `replications` fresh null ensembles lying inside `envelope`.
double band_null_coverage(const Envelope &envelope, int replications, std::uint64_t seed);

enum class Direction { Upward, Downward };
enum class Region { Left, Right };

struct Excursion {
  double u_begin = 0.0;
  double u_end = 0.0;
  Direction direction = Direction::Downward;
  double max_magnitude = 0.0; ///< largest distance beyond the band
  double u_at_max = 0.0;
  double u_centroid = 0.0;      ///< grid points weighted by distance beyond the band
  Region region = Region::Left; ///< side of u = 0.5 holding the centroid
};

struct BandVerdict {
  bool pass = true;
  std::vector<Excursion> excursions;
  double max_excursion = 0.0;

  /// Excursion with the largest magnitude; requires !pass.
  const Excursion &dominant() const;
};

/// PASS iff every curve value lies within [lower, upper] (boundary values
/// pass; anything strictly outside fails).
BandVerdict band_check(const EcdfDiffCurve &curve, const Envelope &envelope);

std::string to_string(Direction d);
std::string to_string(Region r);

/// Reading convention for an excursion of `quantity`, e.g. "left-region
/// downward excursion: inference tends to overestimate tau".
std::string interpret(const Excursion &e, const std::string &quantity);

struct Chi2Test {
  double statistic;
  double p_value;
};

/// sum of Phi^-1(u_i)^2 against chi-squared with N degrees of freedom.
/// Values must lie strictly inside (0, 1).
Chi2Test cook_chi2(std::span<const double> pit_values);

/// Interior PIT mapping (rank + 0.5) / (S + 1) used for cook_chi2.
std::vector<double> interior_pit(std::span<const int> ranks, int S);

void write_envelope_json(const std::filesystem::path &path, const Envelope &env);
Envelope read_envelope_json(const std::filesystem::path &path);

} // namespace sbc
