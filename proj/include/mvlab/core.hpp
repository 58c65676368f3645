#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace mvlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Rows are particles, columns are coordinates. Column-major so that one
// coordinate of the whole cloud is contiguous for the pairwise kernels.
using SampleMatrix = Eigen::MatrixXd;

/// Raised for malformed configuration or violated preconditions on inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation leaves its numerically valid regime
/// (non-finite state, failed convergence, violated self-checks).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted point cloud standing in for a probability measure on R^d.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;

  /// Uniform weights 1/N.
  explicit EmpiricalMeasure(SampleMatrix samples);
  EmpiricalMeasure(SampleMatrix samples, Vector weights);

  [[nodiscard]] Eigen::Index size() const { return samples_.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return samples_.cols(); }
  [[nodiscard]] const SampleMatrix& samples() const { return samples_; }
  [[nodiscard]] const Vector& weights() const { return weights_; }
  [[nodiscard]] bool uniform() const { return uniform_; }

  [[nodiscard]] Vector mean() const;
  [[nodiscard]] Matrix covariance() const;

  /// Concatenation with weights scaled by `lambda` and `1 - lambda`.
  [[nodiscard]] static EmpiricalMeasure mixture(const EmpiricalMeasure& a,
                                                const EmpiricalMeasure& b,
                                                double lambda);

 private:
  void validate() const;

  SampleMatrix samples_;
  Vector weights_;
  bool uniform_ = true;
};

/// Deterministic 64-bit mixing, used to derive independent sub-seeds.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag + 0x632BE59BD9B4E019ULL));
}

}  // namespace mvlab
