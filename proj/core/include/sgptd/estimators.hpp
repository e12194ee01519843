#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include <sgptd/exact_gp.hpp>
#include <sgptd/hyperopt.hpp>
#include <sgptd/lowrank.hpp>
#include <sgptd/spgp.hpp>

namespace sgptd {

/// Uniform fitting surface over the three value estimators. value() is
/// null until the first successful fit; reoptimize() re-tunes whatever the
/// concrete estimator tunes (a no-op for estimators with nothing to tune).
class Estimator {
 public:
  virtual ~Estimator() = default;

  virtual void fit(const Trajectory& traj) = 0;
  virtual void reoptimize(const Trajectory& traj) { (void)traj; }
  virtual const ValueFunction* value() const = 0;
  virtual double log_marginal() const = 0;
  virtual const ModelParams& params() const = 0;
  virtual std::string_view name() const = 0;
};

class ExactEstimator final : public Estimator {
 public:
  explicit ExactEstimator(ModelParams params) : params_(std::move(params)) {}

  void fit(const Trajectory& traj) override {
    posterior_ = fit_exact(traj, params_);
  }
  const ValueFunction* value() const override {
    return posterior_ ? &*posterior_ : nullptr;
  }
  double log_marginal() const override {
    return posterior_ ? posterior_->log_marginal() : 0.0;
  }
  const ModelParams& params() const override { return params_; }
  std::string_view name() const override { return "exact"; }

 private:
  ModelParams params_;
  std::optional<ExactPosterior> posterior_;
};

class SparseEstimator final : public Estimator {
 public:
  /// Support locations are drawn from the first fitted trajectory; when it
  /// has fewer inputs than `support_count`, sampling falls back to jittered
  /// duplicates.
  SparseEstimator(ModelParams params, Index support_count, OptimConfig optim,
                  std::uint64_t seed)
      : params_(std::move(params)),
        support_count_(support_count),
        optim_(optim),
        seed_(seed) {}

  void fit(const Trajectory& traj) override {
    ensure_support(traj);
    posterior_ = fit_sparse(traj, params_, *pseudo_);
  }

  /// Evidence maximization over hyperparameters and support locations.
  void reoptimize(const Trajectory& traj) override {
    ensure_support(traj);
    auto result = optimize(traj, params_, *pseudo_, optim_);
    params_ = result.params;
    pseudo_ = std::move(result.pseudo);
  }

  const ValueFunction* value() const override {
    return posterior_ ? &*posterior_ : nullptr;
  }
  double log_marginal() const override {
    return posterior_ ? posterior_->log_marginal() : 0.0;
  }
  const ModelParams& params() const override { return params_; }
  std::string_view name() const override { return "sparse"; }
  const PseudoInputSet* pseudo() const {
    return pseudo_ ? &*pseudo_ : nullptr;
  }
  const SparsePosterior* posterior() const {
    return posterior_ ? &*posterior_ : nullptr;
  }

 private:
  ModelParams params_;
  Index support_count_;
  OptimConfig optim_;
  std::uint64_t seed_;
  std::optional<PseudoInputSet> pseudo_;
  std::optional<SparsePosterior> posterior_;

  void ensure_support(const Trajectory& traj) {
    if (!pseudo_)
      pseudo_ = init_pseudo(traj, support_count_, PseudoInit::RandomSubset,
                            seed_);
  }
};

class LowRankEstimator final : public Estimator {
 public:
  LowRankEstimator(ModelParams params, double nu)
      : params_(std::move(params)), nu_(nu) {}

  void fit(const Trajectory& traj) override {
    posterior_ = fit_lowrank(traj, params_, nu_);
  }
  const ValueFunction* value() const override {
    return posterior_ ? &*posterior_ : nullptr;
  }
  double log_marginal() const override {
    return posterior_ ? posterior_->log_marginal() : 0.0;
  }
  const ModelParams& params() const override { return params_; }
  std::string_view name() const override { return "lowrank"; }
  double retention_fraction() const {
    return posterior_ ? posterior_->retention_fraction() : 0.0;
  }
  const LowRankPosterior* posterior() const {
    return posterior_ ? &*posterior_ : nullptr;
  }

 private:
  ModelParams params_;
  double nu_;
  std::optional<LowRankPosterior> posterior_;
};

}  // namespace sgptd
