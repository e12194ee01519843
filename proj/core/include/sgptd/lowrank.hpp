#pragma once

#include <sgptd/common.hpp>
#include <sgptd/linalg.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

/// Online dictionary of retained inputs. A candidate's novelty is the
/// conditional variance of its latent value given the dictionary; admission
/// appends the point and extends the kernel factorization by one rank.
class Dictionary {
 public:
  explicit Dictionary(KernelParams kernel);

  struct Novelty {
    double delta = 0.0;   // conditional variance, clamped at 0
    Vector coefficients;  // projection of the candidate onto the dictionary
  };
  Novelty novelty(const Vector& x) const;

  /// Admits x. Throws InvalidInput when the candidate's conditional variance
  /// sits at or below twice the diagonal regularizer, i.e. the factorization
  /// could not distinguish the extended matrix from a singular one.
  void admit(const Vector& x);

  Index size() const { return size_; }
  Matrix locations() const { return locations_.topRows(size_); }
  const KernelParams& kernel() const { return kernel_; }

  /// Lower-triangular factor of the dictionary kernel matrix.
  Matrix cholesky_factor() const { return chol_.topLeftCorner(size_, size_); }

 private:
  KernelParams kernel_;
  Matrix locations_;  // capacity rows, first size_ valid
  Matrix chol_;
  Index size_ = 0;

  void reserve(Index capacity);
};

/// Value posterior of the rejection baseline: the exact model with the
/// input covariance replaced by its projection onto the dictionary.
/// Prediction is O(dict) for the mean and O(dict^2) for the variance.
class LowRankPosterior final : public ValueFunction {
 public:
  Prediction predict(const Vector& query) const override;
  double predict_mean(const Vector& query) const override;
  double variance_unclamped(const Vector& query) const;

  double log_marginal() const { return log_marginal_; }
  double retention_fraction() const { return retention_; }
  Index dictionary_size() const { return dictionary_.rows(); }
  const Matrix& dictionary() const { return dictionary_; }
  const Vector& weights() const { return weights_; }
  /// Projection coefficient rows, one per trajectory input.
  const Matrix& projection() const { return projection_; }
  const ModelParams& params() const { return params_; }

 private:
  Matrix dictionary_;  // retained inputs, one per row
  Vector weights_;
  Matrix lambda_;
  Matrix projection_;
  ModelParams params_;
  double log_marginal_ = 0.0;
  double retention_ = 0.0;

  friend LowRankPosterior fit_lowrank(const Trajectory&, const ModelParams&,
                                      double);
  LowRankPosterior() = default;
};

/// Streams the trajectory inputs in time order, admitting a point iff its
/// novelty exceeds nu (never below the dictionary's representability floor,
/// so repeated near-identical inputs cannot force a singular update). The
/// first input of an episode is anchored with a much smaller threshold so
/// every episode is represented. Solve cost is O(N * dict^2).
LowRankPosterior fit_lowrank(const Trajectory& traj, const ModelParams& params,
                             double nu);

}  // namespace sgptd
