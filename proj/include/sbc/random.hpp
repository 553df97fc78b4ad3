#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string>

namespace sbc {

/// SplitMix64 finalizer; used to turn structured keys into engine seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Well-known substream roles. Keeping them in one place guarantees that two
/// consumers never draw from the same (seed, iteration, role) stream.
enum class StreamRole : std::uint64_t {
  Prior = 1,
  Simulate = 2,
  Fit = 3,
  Rank = 4,
  BaseFit = 5,
  Chain = 6,
  Band = 7,
  ObservedData = 8,
  Meta = 9,
};

/**
 * Deterministic random stream (xoshiro256** engine) whose state is a pure
 * function of a key path such as (campaign seed, iteration, role, chain).
 *
 * Any subset of keyed streams can be regenerated on any worker, which is
 * what makes campaigns independent of scheduling. All distributions are
 * implemented here rather than through <random> so outputs are identical
 * across standard library implementations.
 *
 * Satisfies UniformRandomBitGenerator.
 */
class RandomStream {
public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed = 0) { reseed(mix64(seed)); }

  /// Stream keyed by a path of integers, e.g. keyed(seed, {iter, role}).
  static RandomStream keyed(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed ^ 0x5bd1e9955bd1e995ULL);
    for (std::uint64_t k : path) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
    RandomStream s;
    s.reseed(h);
    return s;
  }

  /// Child stream; does not advance this stream.
  RandomStream substream(std::uint64_t key) const {
    RandomStream s;
    s.reseed(mix64(state_[0] ^ mix64(state_[3] + key)));
    return s;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform on the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer on {0, ..., n - 1}; n must be positive. Lemire's method.
  std::uint64_t uniform_int(std::uint64_t n) noexcept {
    __uint128_t m = static_cast<__uint128_t>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>(next()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (both variates used).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  void reseed(std::uint64_t s) noexcept {
    for (auto &w : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      w = mix64(s);
    }
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::string seed_path(std::uint64_t seed,
                             std::initializer_list<std::uint64_t> path) {
  std::string out = std::to_string(seed);
  for (auto k : path) out += "/" + std::to_string(k);
  return out;
}

} // namespace sbc
