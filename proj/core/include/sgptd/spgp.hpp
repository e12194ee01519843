#pragma once

#include <vector>

#include <sgptd/common.hpp>
#include <sgptd/linalg.hpp>
#include <sgptd/td_operator.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

/// The M support locations of the sparse approximation. Latent values at
/// these locations are always marginalized out, never stored.
class PseudoInputSet {
 public:
  /// `locations` holds one point per row. Throws InvalidInput when empty,
  /// non-finite, or when two rows coincide to within 1e-10 (a duplicate
  /// would make the support covariance singular).
  explicit PseudoInputSet(Matrix locations);

  Index count() const { return locations_.rows(); }
  Index dim() const { return locations_.cols(); }
  const Matrix& locations() const { return locations_; }

 private:
  Matrix locations_;
};

/// Weights and conditional variance of a single latent value given the
/// pseudo values: value(x) | u ~ N(weights . u, variance).
struct LatentLikelihoodMoments {
  Vector weights;
  double variance = 0.0;
};

LatentLikelihoodMoments latent_likelihood_moments(const Vector& x,
                                                  const PseudoInputSet& pseudo,
                                                  const KernelParams& kernel);

/// Intermediate quantities of a sparse fit, exposed so their structural
/// invariants can be checked directly. Cost of assembly is O(N M^2); no
/// N x N matrix is ever formed.
struct FitWorkspace {
  TdOperator td;
  Matrix kuu;                  // support covariance, jittered
  Eigen::LLT<Matrix> kuu_chol;
  Matrix kqu;                  // inputs x support
  Matrix kru;                  // rows differenced: one row per transition
  Vector diag_rr;              // per-transition prior reward variance
  Vector cross_cov;            // source/successor covariance per transition
  Vector q_diag;               // diagonal correction, clamped at 0
  std::vector<char> q_clamped;
  Vector gamma;                // q_diag + noise_variance
  Matrix w;                    // kru with rows divided by gamma
  Matrix m_matrix;             // kuu + kru^T w
  Eigen::LLT<Matrix> m_chol;
  Vector b;                    // kru^T (rewards / gamma)
  Vector alpha;                // m_matrix^{-1} b
  double log_marginal = 0.0;
};

FitWorkspace assemble_workspace(const Trajectory& traj,
                                const ModelParams& params,
                                const PseudoInputSet& pseudo);

/// Fitted sparse value posterior: prediction costs O(M) for the mean and
/// O(M^2) for the variance, independent of trajectory length.
class SparsePosterior final : public ValueFunction {
 public:
  SparsePosterior(Vector alpha, Matrix lambda, Matrix pseudo_locations,
                  ModelParams params, double log_marginal);

  Prediction predict(const Vector& query) const override;
  double predict_mean(const Vector& query) const override;
  double variance_unclamped(const Vector& query) const;

  const Vector& alpha() const { return alpha_; }
  const Matrix& lambda() const { return lambda_; }
  const Matrix& pseudo_locations() const { return pseudo_locations_; }
  const ModelParams& params() const { return params_; }
  double log_marginal() const { return log_marginal_; }

 private:
  Vector alpha_;
  Matrix lambda_;
  Matrix pseudo_locations_;
  ModelParams params_;
  double log_marginal_ = 0.0;
};

SparsePosterior fit_sparse(const Trajectory& traj, const ModelParams& params,
                           const PseudoInputSet& pseudo);

/// Gaussian over the latent values at the support locations given the
/// observed rewards.
struct PseudoPosterior {
  Vector mean;
  Matrix covariance;
};

PseudoPosterior pseudo_posterior(const Trajectory& traj,
                                 const ModelParams& params,
                                 const PseudoInputSet& pseudo);

/// Log marginal likelihood of the rewards under the sparse model,
/// evaluated through the low-rank-plus-diagonal structure in O(N M^2).
double log_marginal_sparse(const Trajectory& traj, const ModelParams& params,
                           const PseudoInputSet& pseudo);

/// Gradient layout: [log signal variance, log length scales (D),
/// log noise variance, support coordinates row-major (M x D)].
inline Index grad_size(Index dim, Index pseudo_count) {
  return 2 + dim + pseudo_count * dim;
}

struct LogMarginalWithGrad {
  double value = 0.0;
  Vector grad;
};

LogMarginalWithGrad log_marginal_with_grad(const Trajectory& traj,
                                           const ModelParams& params,
                                           const PseudoInputSet& pseudo);

Vector log_marginal_grad(const Trajectory& traj, const ModelParams& params,
                         const PseudoInputSet& pseudo);

}  // namespace sgptd
