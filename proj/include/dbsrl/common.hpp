#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dbsrl {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A violated caller contract, e.g. an infeasible trajectory.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values produced during training (exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Brute-force enumeration refused because the search space is too large (exit code 4).
class CapExceededError : public std::runtime_error {
 public:
  CapExceededError(const std::string& what, double required)
      : std::runtime_error(what), required_(required) {}
  double required() const noexcept { return required_; }

 private:
  double required_;
};

/// Seeded random stream. Uniform and normal draws are derived from raw 64-bit
/// engine output so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean, double stddev);

  /// Independent child stream; advances this stream by one draw.
  Rng split() { return Rng(next()); }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dbsrl
