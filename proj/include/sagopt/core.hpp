#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sagopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;

// Precondition failures: wrong dimension, index out of range, duplicate batch entries.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Invalid user configuration (hyperparameters, schedules, problem shapes).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an iterate or optimizer buffer stops being finite.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, std::uint64_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_dim(const Vector& v, Index p, const char* what) {
  if (static_cast<Index>(v.size()) != p) {
    throw ContractViolation(std::string(what) + ": expected dimension " + std::to_string(p) +
                            ", got " + std::to_string(v.size()));
  }
}

inline void require_finite(const Vector& v, std::uint64_t iteration, const char* what) {
  if (!v.allFinite()) throw DivergedError(std::string(what) + " is not finite", iteration);
}

// splitmix64 finalizer; derives independent stream seeds from one run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace sagopt
