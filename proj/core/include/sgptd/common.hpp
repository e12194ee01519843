#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgptd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Mean and variance of a Gaussian predictive marginal.
struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Caller-provided data violated a documented precondition.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A kernel system could not be factorized even after jitter escalation,
/// or a likelihood evaluation came out non-finite.
struct IllConditionedModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Evidence maximization could not produce a feasible point.
struct OptimizationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Derives an independent stream seed from a base seed and a stream index
/// (splitmix64 finalizer), so per-episode and per-cell RNGs never overlap.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Common surface of fitted value posteriors. The exact, sparse and
/// low-rank models all expose a Gaussian marginal at a query input;
/// a fitted posterior is immutable and may be queried from any thread.
class ValueFunction {
 public:
  virtual ~ValueFunction() = default;

  /// Predictive mean and variance (variance clamped at zero).
  virtual Prediction predict(const Vector& query) const = 0;

  /// Mean-only path, cheaper than predict() for every model.
  virtual double predict_mean(const Vector& query) const {
    return predict(query).mean;
  }
};

}  // namespace sgptd
