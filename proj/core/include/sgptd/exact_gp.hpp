#pragma once

#include <sgptd/common.hpp>
#include <sgptd/linalg.hpp>
#include <sgptd/td_operator.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

/// Exact value posterior conditioned on observed rewards. Fitting factorizes
/// the full reward covariance, so cost grows cubically with the number of
/// transitions; use the sparse variants for long trajectories.
class ExactPosterior final : public ValueFunction {
 public:
  /// Posterior with no data: predictions fall back to the prior.
  static ExactPosterior prior(const ModelParams& params);

  Prediction predict(const Vector& query) const override;
  double predict_mean(const Vector& query) const override;

  /// Like predict, but without clamping tiny negative variances to zero.
  double variance_unclamped(const Vector& query) const;

  double log_marginal() const { return log_marginal_; }
  const ModelParams& params() const { return params_; }
  Index data_count() const { return inputs_.rows(); }
  const Vector& weights() const { return weights_; }
  const Matrix& training_inputs() const { return inputs_; }

 private:
  ModelParams params_;
  Matrix inputs_;          // trajectory inputs, one point per row
  TdOperator td_;
  Eigen::LLT<Matrix> chol_;  // of H K H^T + sigma^2 I
  Vector weights_;           // (H K H^T + sigma^2 I)^{-1} r
  double log_marginal_ = 0.0;
  bool has_data_ = false;

  friend ExactPosterior fit_exact(const Trajectory&, const ModelParams&);
  ExactPosterior() = default;

  Vector reward_cross_covariance(const Vector& query) const;
};

/// Conditions the value process on every transition of `traj`.
ExactPosterior fit_exact(const Trajectory& traj, const ModelParams& params);

}  // namespace sgptd
