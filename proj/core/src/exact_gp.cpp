#include <sgptd/exact_gp.hpp>

#include <cmath>
#include <numbers>

namespace sgptd {

ExactPosterior ExactPosterior::prior(const ModelParams& params) {
  params.validate();
  ExactPosterior post;
  post.params_ = params;
  return post;
}

ExactPosterior fit_exact(const Trajectory& traj, const ModelParams& params) {
  params.validate();
  if (traj.empty()) return ExactPosterior::prior(params);
  traj.validate();
  if (traj.dim() != params.kernel.dim())
    throw InvalidInput("trajectory dimension does not match kernel");

  ExactPosterior post;
  post.params_ = params;
  post.inputs_ = traj.inputs();
  post.td_ = TdOperator(traj, params.discount, params.terminal_value_zero);
  post.has_data_ = true;

  const Matrix kqq = kernel_matrix(post.inputs_, post.inputs_, params.kernel);
  const Matrix krr =
      post.td_.apply_left(post.td_.apply_right_transpose(kqq.transpose()));
  const Index n = krr.rows();
  Matrix cov = krr + params.noise_variance * Matrix::Identity(n, n);

  auto chol = cholesky_with_jitter(cov, "reward covariance");
  post.chol_ = std::move(chol.llt);
  post.weights_ = post.chol_.solve(traj.rewards());

  const double quad = traj.rewards().dot(post.weights_);
  const double logdet = log_det_from_cholesky(post.chol_);
  post.log_marginal_ =
      -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) +
              logdet + quad);
  return post;
}

Vector ExactPosterior::reward_cross_covariance(const Vector& query) const {
  const Vector kq = kernel_vector(inputs_, query, params_.kernel);
  return td_.apply(kq);
}

Prediction ExactPosterior::predict(const Vector& query) const {
  Prediction out;
  const double prior_var = kernel_eval(query, query, params_.kernel);
  if (!has_data_) {
    out.variance = prior_var;
    return out;
  }
  const Vector kr = reward_cross_covariance(query);
  out.mean = kr.dot(weights_);
  const double var = prior_var - kr.dot(chol_.solve(kr));
  out.variance = std::max(var, 0.0);
  return out;
}

double ExactPosterior::predict_mean(const Vector& query) const {
  if (!has_data_) return 0.0;
  return reward_cross_covariance(query).dot(weights_);
}

double ExactPosterior::variance_unclamped(const Vector& query) const {
  const double prior_var = kernel_eval(query, query, params_.kernel);
  if (!has_data_) return prior_var;
  const Vector kr = reward_cross_covariance(query);
  return prior_var - kr.dot(chol_.solve(kr));
}

}  // namespace sgptd
