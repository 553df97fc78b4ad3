#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "sbc/models.hpp"
#include "sbc/sbc_engine.hpp"
#include "sbc/uniformity.hpp"

using namespace sbc;

namespace {

// Fraction of fresh discrete-uniform ensembles whose N * ECDF stays inside the
// integer bounds everywhere, computed without the library's coverage helper.
double fresh_coverage(const Envelope &env, int reps, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> rank(0, env.S);
  const Eigen::Index K = env.grid.size();
  int inside = 0;
  std::vector<int> counts(static_cast<std::size_t>(env.S) + 1);
  for (int m = 0; m < reps; ++m) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < env.N; ++i) ++counts[static_cast<std::size_t>(rank(gen))];
    bool ok = true;
    for (Eigen::Index k = 0; k < K && ok; ++k) {
      // (rank + 1) / (S + 1) <= k / K  <=>  rank + 1 <= floor(k (S + 1) / K)
      const long limit = (static_cast<long>(k + 1) * (env.S + 1)) / K;
      int c = 0;
      for (long r = 0; r + 1 <= limit; ++r) c += counts[static_cast<std::size_t>(r)];
      ok = c >= env.lower_count(k) && c <= env.upper_count(k);
    }
    inside += ok;
  }
  return static_cast<double>(inside) / reps;
}

std::vector<int> shifted_ranks(int n, std::uint64_t seed) {
  const ConjugateNormalModel model;
  const ConjugateExactBackend shifted(100, 0.5);
  SbcConfig c;
  c.iterations = n;
  c.ranks_S = 100;
  c.seed = seed;
  return prior_sbc(model, shifted, c).ranks_of("theta");
}

} // namespace

TEST_CASE("pit_ecdf_diff") {
  SUBCASE("three continuous PIT values") {
    const std::vector<double> pit{0.03, 0.43, 0.97};
    const std::vector<double> grid{0.25, 0.5, 1.0};
    const auto c = pit_ecdf_diff(pit, grid);
    CHECK(c.values(1) == doctest::Approx(2.0 / 3.0 - 0.5));
    CHECK(c.values(1) == doctest::Approx(0.1667).epsilon(1e-3));
    CHECK(c.values(2) == 0.0);
  }
  SUBCASE("perfectly uniform ranks") {
    const int S = 99;
    std::vector<int> ranks(S + 1);
    for (int r = 0; r <= S; ++r) ranks[r] = r;
    const auto c = pit_ecdf_diff(ranks, S);
    CHECK(c.grid.size() == S + 1);
    CHECK(c.values.cwiseAbs().maxCoeff() <= 1.0 / (S + 1) + 1e-15);
  }
  SUBCASE("all mass at rank zero") {
    const std::vector<int> ranks(40, 0);
    const auto c = pit_ecdf_diff(ranks, 100);
    REQUIRE(c.grid.size() == 40);
    CHECK(c.values(0) == doctest::Approx(1.0 - c.grid(0)));
    CHECK(c.values(39) == 0.0);
  }
  SUBCASE("value at one is exactly zero") {
    std::mt19937 gen(1);
    std::uniform_int_distribution<int> r(0, 37);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<int> ranks(1 + rep * 7);
      for (int &x : ranks) x = r(gen);
      const auto c = pit_ecdf_diff(ranks, 37);
      CHECK(c.grid(c.grid.size() - 1) == 1.0);
      CHECK(c.values(c.values.size() - 1) == 0.0);
    }
  }
  CHECK_THROWS(pit_ecdf_diff(std::vector<int>{0, 101}, 100));
  CHECK_THROWS(pit_ecdf_diff(std::vector<int>{-1}, 100));
  CHECK_THROWS(pit_ecdf_diff(std::vector<int>{}, 100));
}

TEST_CASE("simultaneous band coverage") {
  for (int N : {100, 250, 500}) {
    CAPTURE(N);
    const Envelope env = simultaneous_band(N, 100, 0.95);
    const double cov = fresh_coverage(env, 10000, 1234 + static_cast<std::uint64_t>(N));
    CHECK(cov >= 0.94);
    CHECK(cov <= 0.96);
    CHECK(env.gamma < 0.05);
    CHECK((env.lower.array() <= 0.0).all());
    CHECK((env.upper.array() >= 0.0).all());
  }
}

TEST_CASE("band narrows as N doubles") {
  const Envelope a = simultaneous_band(250, 100, 0.95);
  const Envelope b = simultaneous_band(500, 100, 0.95);
  REQUIRE(a.grid.size() == b.grid.size());
  const Eigen::Index mid = a.grid.size() / 2;
  CHECK(std::abs(a.grid(mid) - 0.5) < 0.01);
  const double wa = 0.5 * (a.upper(mid) - a.lower(mid));
  const double wb = 0.5 * (b.upper(mid) - b.lower(mid));
  CHECK(wb < wa);
}

TEST_CASE("single-rank band") {
  // With N = 1 the grid is {1}, where the difference is identically zero.
  const Envelope env = simultaneous_band(1, 100, 0.95);
  CHECK(env.grid.size() == 1);
  CHECK(fresh_coverage(env, 1000, 5) == 1.0);
}

TEST_CASE("band_check") {
  const Envelope env = simultaneous_band(100, 100, 0.95);
  EcdfDiffCurve zero{env.grid, Eigen::VectorXd::Zero(env.grid.size()), 100, 100};
  CHECK(band_check(zero, env).pass);

  SUBCASE("boundary semantics") {
    EcdfDiffCurve c = zero;
    c.values(10) = env.upper(10);
    CHECK(band_check(c, env).pass);
    c.values(10) = env.upper(10) + 1e-9;
    const auto v = band_check(c, env);
    CHECK_FALSE(v.pass);
    REQUIRE(v.excursions.size() == 1);
    CHECK(v.excursions[0].direction == Direction::Upward);
    CHECK(v.excursions[0].max_magnitude == doctest::Approx(1e-9).epsilon(1e-3));
    CHECK(v.dominant().u_at_max == env.grid(10));
  }

  SUBCASE("mismatched shapes are rejected") {
    EcdfDiffCurve c = zero;
    c.N = 99;
    CHECK_THROWS(band_check(c, env));
    const Envelope other = simultaneous_band(50, 100, 0.95);
    CHECK_THROWS(band_check(zero, other));
  }

  SUBCASE("verdicts ignore rank order") {
    std::mt19937 gen(3);
    std::uniform_int_distribution<int> r(0, 100);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<int> ranks(100);
      for (int &x : ranks) x = std::min(100, r(gen) + rep);
      auto shuffled = ranks;
      std::shuffle(shuffled.begin(), shuffled.end(), gen);
      const auto a = band_check(pit_ecdf_diff(ranks, 100), env);
      const auto b = band_check(pit_ecdf_diff(shuffled, 100), env);
      CHECK(a.pass == b.pass);
      CHECK(a.max_excursion == b.max_excursion);
      CHECK(a.excursions.size() == b.excursions.size());
    }
  }
}

TEST_CASE("shifted refits fail the band on the left") {
  // Draws sit above theta', so ranks pile up near zero and the ECDF rises early.
  const Envelope env = simultaneous_band(300, 100, 0.95);
  int fail = 0, upward_left = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto v = band_check(pit_ecdf_diff(shifted_ranks(300, 500 + static_cast<std::uint64_t>(rep)), 100), env);
    if (v.pass) continue;
    ++fail;
    upward_left += v.dominant().region == Region::Left && v.dominant().direction == Direction::Upward;
  }
  CAPTURE(fail);
  CAPTURE(upward_left);
  CHECK(fail >= 95);
  CHECK(upward_left >= 95);
}

TEST_CASE("interpretation text") {
  Excursion e;
  e.region = Region::Left;
  e.direction = Direction::Downward;
  CHECK(interpret(e, "tau") == "left-region downward excursion: inference tends to overestimate tau");
  e.region = Region::Right;
  CHECK(interpret(e, "mu0") ==
        "right-region downward excursion: the right tail of the approximated posterior for mu0 "
        "tends to be thin");
  e.direction = Direction::Upward;
  CHECK(interpret(e, "x") == "right-region upward excursion: inference tends to underestimate x");
  e.region = Region::Left;
  CHECK(interpret(e, "x") ==
        "left-region upward excursion: the left tail of the approximated posterior for x tends to "
        "be thin");
}

TEST_CASE("cook_chi2") {
  const std::vector<double> half(50, 0.5);
  const auto t = cook_chi2(half);
  CHECK(t.statistic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.p_value == doctest::Approx(1.0).epsilon(1e-9));

  SUBCASE("normal scores follow chi-squared moments") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> z(0.0, 1.0);
    const int n = 1000;
    std::vector<double> u(n);
    for (double &x : u) x = 0.5 * std::erfc(-z(gen) / std::numbers::sqrt2);
    const double s = cook_chi2(u).statistic;
    CHECK(s >= n - 4 * std::sqrt(2.0 * n));
    CHECK(s <= n + 4 * std::sqrt(2.0 * n));
  }
  SUBCASE("tail divergence") {
    const double a = cook_chi2(std::vector<double>{1 - 1e-8}).statistic;
    const double b = cook_chi2(std::vector<double>{1 - 1e-12}).statistic;
    CHECK(b > a);
    CHECK(a > 30.0);
  }
  CHECK_THROWS(cook_chi2(std::vector<double>{0.2, 1.0}));
  CHECK_THROWS(cook_chi2(std::vector<double>{0.0}));

  const auto pit = interior_pit(std::vector<int>{0, 100}, 100);
  CHECK(pit[0] == doctest::Approx(0.5 / 101));
  CHECK(pit[1] == doctest::Approx(100.5 / 101));
}

TEST_CASE("envelope json round trip") {
  const Envelope env = simultaneous_band(120, 50, 0.9);
  const auto path = std::filesystem::temp_directory_path() / "sbc_envelope_test.json";
  write_envelope_json(path, env);
  const Envelope back = read_envelope_json(path);
  CHECK(back.N == 120);
  CHECK(back.S == 50);
  CHECK(back.coverage == env.coverage);
  CHECK(back.gamma == env.gamma);
  CHECK(back.lower_count == env.lower_count);
  CHECK(back.upper_count == env.upper_count);
  CHECK((back.lower - env.lower).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(back.mc_replications == env.mc_replications);
  CHECK(back.seed == env.seed);
  std::filesystem::remove(path);
}
