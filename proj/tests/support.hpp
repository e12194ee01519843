#pragma once

// Shared fixtures and dense reference implementations for the test suites.
// The references take the slow textbook path on purpose — explicit dense
// matrices, explicit inverses, eigenvalue log-determinants — so that the
// library's structured O(N M^2) solves are checked against arithmetic that
// shares none of their code path.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include <sgptd/exact_gp.hpp>
#include <sgptd/kernel.hpp>
#include <sgptd/lowrank.hpp>
#include <sgptd/spgp.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd::testing {

/// |got - want| relative to want, with an absolute floor of 1 so values
/// near zero are compared absolutely.
inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Dense differencing matrix built from the episode structure alone, with
/// its own index bookkeeping.
inline Matrix dense_td_matrix(const Trajectory& traj, double discount,
                              bool terminal_value_zero) {
  Matrix h = Matrix::Zero(traj.transition_count(), traj.input_count());
  Index t = 0;
  Index base = 0;
  Index episode_start = 0;
  for (Index e = 0; e < traj.episode_count(); ++e) {
    const Index last = traj.episode_breaks()[static_cast<size_t>(e)];
    const Index len = last - episode_start + 1;
    for (Index j = 0; j < len; ++j, ++t) {
      h(t, base + j) = 1.0;
      const bool episode_end = j == len - 1;
      if (!(terminal_value_zero && episode_end))
        h(t, base + j + 1) = -discount;
    }
    base += len + 1;
    episode_start = last + 1;
  }
  return h;
}

/// log det of a symmetric positive-definite matrix via its eigenvalues.
inline double eig_log_det(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  return eig.eigenvalues().array().log().sum();
}

// ---- exact model references ----

/// Predictive mean/variance by conditioning the joint Gaussian over
/// (rewards, value at query) with an explicit inverse.
inline Prediction dense_exact_predict(const Trajectory& traj,
                                      const ModelParams& params,
                                      const Vector& query) {
  const Matrix h =
      dense_td_matrix(traj, params.discount, params.terminal_value_zero);
  const Matrix kqq =
      kernel_matrix(traj.inputs(), traj.inputs(), params.kernel);
  const Index n = traj.transition_count();
  const Matrix cov = h * kqq * h.transpose() +
                     params.noise_variance * Matrix::Identity(n, n);
  const Matrix cinv = cov.inverse();
  const Vector cross = h * kernel_vector(traj.inputs(), query, params.kernel);

  Prediction out;
  out.mean = cross.dot(cinv * traj.rewards());
  out.variance = kernel_eval(query, query, params.kernel) -
                 cross.dot(cinv * cross);
  return out;
}

inline double dense_exact_log_marginal(const Trajectory& traj,
                                       const ModelParams& params) {
  const Matrix h =
      dense_td_matrix(traj, params.discount, params.terminal_value_zero);
  const Matrix kqq =
      kernel_matrix(traj.inputs(), traj.inputs(), params.kernel);
  const Index n = traj.transition_count();
  const Matrix cov = h * kqq * h.transpose() +
                     params.noise_variance * Matrix::Identity(n, n);
  const double quad = traj.rewards().dot(cov.inverse() * traj.rewards());
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) +
                 eig_log_det(cov) + quad);
}

// ---- sparse (low-rank plus diagonal) references ----

/// The dense reward covariance implied by the sparse model: low-rank part
/// through the support set plus the clamped diagonal correction and noise.
inline Matrix dense_sparse_cov(const Trajectory& traj,
                               const ModelParams& params,
                               const PseudoInputSet& pseudo, Matrix* kru_out,
                               Matrix* kuu_inv_out) {
  const Matrix h =
      dense_td_matrix(traj, params.discount, params.terminal_value_zero);
  Matrix kuu =
      kernel_matrix(pseudo.locations(), pseudo.locations(), params.kernel);
  kuu.diagonal().array() += kDiagonalJitter * params.kernel.signal_variance();
  const Matrix kuu_inv = kuu.inverse();
  const Matrix kru =
      h * kernel_matrix(traj.inputs(), pseudo.locations(), params.kernel);
  const Matrix kqq =
      kernel_matrix(traj.inputs(), traj.inputs(), params.kernel);
  const Matrix krr = h * kqq * h.transpose();
  const Matrix low_rank = kru * kuu_inv * kru.transpose();

  const Index n = traj.transition_count();
  Matrix cov = low_rank;
  for (Index t = 0; t < n; ++t)
    cov(t, t) += std::max(krr(t, t) - low_rank(t, t), 0.0) +
                 params.noise_variance;
  if (kru_out) *kru_out = kru;
  if (kuu_inv_out) *kuu_inv_out = kuu_inv;
  return cov;
}

inline double dense_sparse_log_marginal(const Trajectory& traj,
                                        const ModelParams& params,
                                        const PseudoInputSet& pseudo) {
  const Matrix cov = dense_sparse_cov(traj, params, pseudo, nullptr, nullptr);
  const double quad = traj.rewards().dot(cov.inverse() * traj.rewards());
  return -0.5 *
         (static_cast<double>(traj.transition_count()) *
              std::log(2.0 * std::numbers::pi) +
          eig_log_det(cov) + quad);
}

inline Prediction dense_sparse_predict(const Trajectory& traj,
                                       const ModelParams& params,
                                       const PseudoInputSet& pseudo,
                                       const Vector& query) {
  Matrix kru, kuu_inv;
  const Matrix cov = dense_sparse_cov(traj, params, pseudo, &kru, &kuu_inv);
  const Matrix cinv = cov.inverse();
  const Vector ku = kernel_vector(pseudo.locations(), query, params.kernel);
  const Vector cross = kru * (kuu_inv * ku);

  Prediction out;
  out.mean = cross.dot(cinv * traj.rewards());
  out.variance = kernel_eval(query, query, params.kernel) -
                 cross.dot(cinv * cross);
  return out;
}

// ---- low-rank projection references ----

/// Dense reward covariance of the rejection baseline, rebuilt from the
/// fitted posterior's own dictionary and projection rows.
inline Matrix dense_lowrank_cov(const Trajectory& traj,
                                const ModelParams& params,
                                const LowRankPosterior& post,
                                Matrix* a_out) {
  const Matrix h =
      dense_td_matrix(traj, params.discount, params.terminal_value_zero);
  Matrix ktil = kernel_matrix(post.dictionary(), post.dictionary(),
                              params.kernel);
  ktil.diagonal().array() +=
      kDiagonalJitter * params.kernel.signal_variance();
  const Matrix a = h * post.projection();
  const Index n = traj.transition_count();
  if (a_out) *a_out = a;
  return a * ktil * a.transpose() +
         params.noise_variance * Matrix::Identity(n, n);
}

inline double dense_lowrank_log_marginal(const Trajectory& traj,
                                         const ModelParams& params,
                                         const LowRankPosterior& post) {
  const Matrix cov = dense_lowrank_cov(traj, params, post, nullptr);
  const double quad = traj.rewards().dot(cov.inverse() * traj.rewards());
  return -0.5 *
         (static_cast<double>(traj.transition_count()) *
              std::log(2.0 * std::numbers::pi) +
          eig_log_det(cov) + quad);
}

inline Prediction dense_lowrank_predict(const Trajectory& traj,
                                        const ModelParams& params,
                                        const LowRankPosterior& post,
                                        const Vector& query) {
  Matrix a;
  const Matrix cov = dense_lowrank_cov(traj, params, post, &a);
  const Matrix cinv = cov.inverse();
  const Vector ktil = kernel_vector(post.dictionary(), query, params.kernel);
  const Vector cross = a * ktil;

  Prediction out;
  out.mean = cross.dot(cinv * traj.rewards());
  out.variance = kernel_eval(query, query, params.kernel) -
                 cross.dot(cinv * cross);
  return out;
}

/// Conditional variance of a candidate given a point set, via the Schur
/// complement with an explicit inverse.
inline double dense_novelty(const Matrix& points, const KernelParams& kernel,
                            const Vector& x) {
  if (points.rows() == 0) return kernel_eval(x, x, kernel);
  Matrix k = kernel_matrix(points, points, kernel);
  k.diagonal().array() += kDiagonalJitter * kernel.signal_variance();
  const Vector kx = kernel_vector(points, x, kernel);
  return kernel_eval(x, x, kernel) - kx.dot(k.inverse() * kx);
}

// ---- finite-difference gradient ----

/// Packs (hyperparameters, noise, support locations) in the gradient
/// layout of log_marginal_grad.
inline Vector pack_point(const ModelParams& params,
                         const PseudoInputSet& pseudo) {
  const Index dim = params.kernel.dim();
  const Index m = pseudo.count();
  Vector x(grad_size(dim, m));
  x[0] = params.kernel.log_signal_variance;
  x.segment(1, dim) = params.kernel.log_length_scales;
  x[1 + dim] = std::log(params.noise_variance);
  for (Index j = 0; j < m; ++j)
    x.segment(2 + dim + j * dim, dim) = pseudo.locations().row(j).transpose();
  return x;
}

inline double eval_packed(const Trajectory& traj, const ModelParams& base,
                          Index m, const Vector& x) {
  const Index dim = base.kernel.dim();
  ModelParams params = base;
  params.kernel.log_signal_variance = x[0];
  params.kernel.log_length_scales = x.segment(1, dim);
  params.noise_variance = std::exp(x[1 + dim]);
  Matrix z(m, dim);
  for (Index j = 0; j < m; ++j)
    z.row(j) = x.segment(2 + dim + j * dim, dim).transpose();
  return log_marginal_sparse(traj, params, PseudoInputSet(std::move(z)));
}

/// Central finite differences of the sparse log marginal, coordinate by
/// coordinate in the packed layout.
inline Vector fd_log_marginal_grad(const Trajectory& traj,
                                   const ModelParams& params,
                                   const PseudoInputSet& pseudo,
                                   double step_scale = 1e-6) {
  const Vector x0 = pack_point(params, pseudo);
  Vector grad(x0.size());
  for (Index i = 0; i < x0.size(); ++i) {
    const double h = step_scale * std::max(1.0, std::abs(x0[i]));
    Vector xp = x0;
    Vector xm = x0;
    xp[i] += h;
    xm[i] -= h;
    grad[i] = (eval_packed(traj, params, pseudo.count(), xp) -
               eval_packed(traj, params, pseudo.count(), xm)) /
              (2.0 * h);
  }
  return grad;
}

// ---- random instances ----

inline ModelParams random_params(std::mt19937_64& rng, Index dim) {
  std::uniform_real_distribution<double> sf(-0.5, 0.5);
  std::uniform_real_distribution<double> ls(-1.0, 1.0);
  std::uniform_real_distribution<double> noise(0.05, 0.3);
  std::uniform_real_distribution<double> discount(0.5, 0.99);

  ModelParams params;
  params.kernel.log_signal_variance = sf(rng);
  params.kernel.log_length_scales.resize(dim);
  for (Index d = 0; d < dim; ++d) params.kernel.log_length_scales[d] = ls(rng);
  params.noise_variance = noise(rng);
  params.discount = discount(rng);
  return params;
}

/// Random multi-episode trajectory with inputs in [-2, 2] and unit-scale
/// rewards. A positive min_separation rejection-samples the inputs to keep
/// them pairwise apart; near-coincident inputs put kernel eigenvalues at the
/// diagonal-jitter scale, where the sparse and exact models legitimately
/// disagree by more than solver error.
inline Trajectory random_trajectory(std::mt19937_64& rng, Index transitions,
                                    Index dim, Index max_episodes = 3,
                                    double min_separation = 0.0) {
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  std::normal_distribution<double> unit;
  std::uniform_int_distribution<Index> n_episodes(
      1, std::min(max_episodes, transitions));

  const Index episodes = n_episodes(rng);
  std::vector<Index> breaks;
  for (Index e = 0; e < episodes - 1; ++e)
    breaks.push_back(std::uniform_int_distribution<Index>(
        0, transitions - 1)(rng));
  breaks.push_back(transitions - 1);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  const Index n_inputs = transitions + static_cast<Index>(breaks.size());
  Matrix inputs(n_inputs, dim);
  for (Index i = 0; i < n_inputs; ++i) {
    for (;;) {
      for (Index d = 0; d < dim; ++d) inputs(i, d) = box(rng);
      bool apart = true;
      for (Index j = 0; apart && j < i; ++j)
        if ((inputs.row(i) - inputs.row(j)).norm() < min_separation)
          apart = false;
      if (apart) break;
    }
  }
  Vector rewards(transitions);
  for (Index t = 0; t < transitions; ++t) rewards[t] = unit(rng);
  return Trajectory(std::move(inputs), std::move(rewards), std::move(breaks));
}

/// Random support locations drawn uniformly from [-2, 2]; rejection keeps
/// them pairwise separated.
inline Matrix random_pseudo_locations(std::mt19937_64& rng, Index m,
                                      Index dim) {
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  Matrix z(m, dim);
  for (Index j = 0; j < m; ++j) {
    for (int attempt = 0;; ++attempt) {
      for (Index d = 0; d < dim; ++d) z(j, d) = box(rng);
      bool ok = true;
      for (Index i = 0; i < j; ++i)
        if ((z.row(i) - z.row(j)).norm() < 1e-6) ok = false;
      if (ok || attempt > 100) break;
    }
  }
  return z;
}

inline Vector random_query(std::mt19937_64& rng, Index dim) {
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  Vector x(dim);
  for (Index d = 0; d < dim; ++d) x[d] = box(rng);
  return x;
}

}  // namespace sgptd::testing
