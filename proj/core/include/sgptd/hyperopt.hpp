#pragma once

#include <cstdint>
#include <vector>

#include <sgptd/common.hpp>
#include <sgptd/spgp.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

enum class OptimScope {
  All,         // hyperparameters, noise and support locations
  PseudoOnly,  // support locations only, hyperparameters held fixed
};

struct OptimConfig {
  int max_iterations = 100;
  double gradient_tolerance = 1e-5;
  double regularization_weight = 1e-3;
  int restarts = 1;
  std::uint64_t rng_seed = 0;
  OptimScope scope = OptimScope::All;

  void validate() const;
};

struct ObjectiveValue {
  double value = 0.0;
  Vector grad;  // same layout as log_marginal_grad
};

/// Regularized evidence: log marginal minus
/// regularization_weight * (|log hyperparameters|^2 + |Z|^2).
ObjectiveValue objective(const Trajectory& traj, const ModelParams& params,
                         const PseudoInputSet& pseudo,
                         const OptimConfig& config);

struct OptimResult {
  ModelParams params;
  PseudoInputSet pseudo;
  double value = 0.0;         // final regularized objective
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective at start and after accepted steps
};

/// Maximizes the regularized evidence from the given starting point.
/// Restart 0 starts exactly at the initialization, further restarts from
/// deterministically perturbed copies; the best end point wins (ties by
/// restart index), so the result never falls below the starting objective.
/// Throws OptimizationFailed when no restart ever reaches a feasible point.
OptimResult optimize(const Trajectory& traj, const ModelParams& init_params,
                     const PseudoInputSet& init_pseudo,
                     const OptimConfig& config);

enum class PseudoInit {
  RandomSubset,  // distinct training inputs plus a small separating jitter
  UniformRange,  // uniform over the bounding box of the training inputs
};

/// Draws M support locations from the trajectory inputs. Deterministic
/// given the seed. jitter_scale is relative to the per-coordinate input
/// range; 0 disables the jitter (RandomSubset then returns exact inputs).
PseudoInputSet init_pseudo(const Trajectory& traj, Index m,
                           PseudoInit strategy, std::uint64_t seed,
                           double jitter_scale = 1e-6);

}  // namespace sgptd
