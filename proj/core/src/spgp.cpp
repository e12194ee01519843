#include <sgptd/spgp.hpp>

#include <cmath>
#include <numbers>
#include <utility>

namespace sgptd {

PseudoInputSet::PseudoInputSet(Matrix locations)
    : locations_(std::move(locations)) {
  if (locations_.rows() < 1)
    throw InvalidInput("pseudo input set must contain at least one location");
  if (!locations_.allFinite())
    throw InvalidInput("pseudo input locations must be finite");
  for (Index i = 0; i < locations_.rows(); ++i)
    for (Index j = i + 1; j < locations_.rows(); ++j)
      if ((locations_.row(i) - locations_.row(j)).norm() < 1e-10)
        throw InvalidInput("pseudo input locations coincide");
}

LatentLikelihoodMoments latent_likelihood_moments(const Vector& x,
                                                  const PseudoInputSet& pseudo,
                                                  const KernelParams& kernel) {
  kernel.validate();
  if (x.size() != pseudo.dim())
    throw InvalidInput("query dimension does not match pseudo inputs");

  Matrix kuu = kernel_matrix(pseudo.locations(), pseudo.locations(), kernel);
  kuu.diagonal().array() += kDiagonalJitter * kernel.signal_variance();
  auto chol = cholesky_with_jitter(kuu, "support covariance");

  const Vector ku = kernel_vector(pseudo.locations(), x, kernel);
  LatentLikelihoodMoments out;
  out.weights = chol.llt.solve(ku);
  out.variance =
      std::max(kernel_eval(x, x, kernel) - ku.dot(out.weights), 0.0);
  return out;
}

FitWorkspace assemble_workspace(const Trajectory& traj,
                                const ModelParams& params,
                                const PseudoInputSet& pseudo) {
  params.validate();
  if (traj.empty())
    throw InvalidInput("cannot fit a sparse posterior without transitions");
  traj.validate();
  if (traj.dim() != params.kernel.dim())
    throw InvalidInput("trajectory dimension does not match kernel");
  if (pseudo.dim() != traj.dim())
    throw InvalidInput("pseudo input dimension does not match trajectory");

  FitWorkspace ws;
  ws.td = TdOperator(traj, params.discount, params.terminal_value_zero);
  const Matrix& x = traj.inputs();
  const Matrix& z = pseudo.locations();
  const Vector& r = traj.rewards();
  const Index n = traj.transition_count();
  const double gamma = params.discount;

  ws.kuu = kernel_matrix(z, z, params.kernel);
  ws.kuu.diagonal().array() +=
      kDiagonalJitter * params.kernel.signal_variance();
  {
    auto chol = cholesky_with_jitter(ws.kuu, "support covariance");
    ws.kuu.diagonal().array() += chol.applied_jitter;
    ws.kuu_chol = std::move(chol.llt);
  }

  ws.kqu = kernel_matrix(x, z, params.kernel);
  ws.kru = ws.td.apply_left(ws.kqu);

  ws.diag_rr.resize(n);
  ws.cross_cov = Vector::Zero(n);
  for (Index t = 0; t < n; ++t) {
    const auto [a, b] = traj.transition_inputs(t);
    const Vector xa = x.row(a).transpose();
    const double kaa = kernel_eval(xa, xa, params.kernel);
    if (params.terminal_value_zero && traj.is_terminal(t)) {
      ws.diag_rr[t] = kaa;
      continue;
    }
    const Vector xb = x.row(b).transpose();
    const double kab = kernel_eval(xa, xb, params.kernel);
    const double kbb = kernel_eval(xb, xb, params.kernel);
    ws.cross_cov[t] = kab;
    ws.diag_rr[t] = kaa - 2.0 * gamma * kab + gamma * gamma * kbb;
  }

  // Diagonal correction: prior reward variance minus the low-rank part.
  const Matrix v = ws.kuu_chol.matrixL().solve(ws.kru.transpose());
  ws.q_diag.resize(n);
  ws.q_clamped.assign(static_cast<size_t>(n), 0);
  for (Index t = 0; t < n; ++t) {
    const double raw = ws.diag_rr[t] - v.col(t).squaredNorm();
    if (raw < 0.0) {
      ws.q_diag[t] = 0.0;
      ws.q_clamped[static_cast<size_t>(t)] = 1;
    } else {
      ws.q_diag[t] = raw;
    }
  }
  ws.gamma = ws.q_diag.array() + params.noise_variance;

  ws.w = (ws.kru.array().colwise() / ws.gamma.array()).matrix();
  ws.m_matrix = ws.kuu + ws.kru.transpose() * ws.w;
  ws.m_matrix = 0.5 * (ws.m_matrix + ws.m_matrix.transpose()).eval();
  {
    auto chol = cholesky_with_jitter(ws.m_matrix, "sparse system matrix");
    ws.m_matrix.diagonal().array() += chol.applied_jitter;
    ws.m_chol = std::move(chol.llt);
  }

  ws.b = ws.kru.transpose() * (r.array() / ws.gamma.array()).matrix();
  ws.alpha = ws.m_chol.solve(ws.b);

  const double logdet = ws.gamma.array().log().sum() +
                        log_det_from_cholesky(ws.m_chol) -
                        log_det_from_cholesky(ws.kuu_chol);
  const double quad =
      (r.array().square() / ws.gamma.array()).sum() - ws.b.dot(ws.alpha);
  ws.log_marginal =
      -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) +
              logdet + quad);
  if (!std::isfinite(ws.log_marginal))
    throw IllConditionedModel("sparse log marginal is not finite");
  return ws;
}

SparsePosterior::SparsePosterior(Vector alpha, Matrix lambda,
                                 Matrix pseudo_locations, ModelParams params,
                                 double log_marginal)
    : alpha_(std::move(alpha)),
      lambda_(std::move(lambda)),
      pseudo_locations_(std::move(pseudo_locations)),
      params_(std::move(params)),
      log_marginal_(log_marginal) {}

SparsePosterior fit_sparse(const Trajectory& traj, const ModelParams& params,
                           const PseudoInputSet& pseudo) {
  FitWorkspace ws = assemble_workspace(traj, params, pseudo);
  const Index m = pseudo.count();
  const Matrix eye = Matrix::Identity(m, m);
  Matrix lambda = ws.kuu_chol.solve(eye) - ws.m_chol.solve(eye);
  lambda = 0.5 * (lambda + lambda.transpose()).eval();
  return SparsePosterior(std::move(ws.alpha), std::move(lambda),
                         pseudo.locations(), params, ws.log_marginal);
}

Prediction SparsePosterior::predict(const Vector& query) const {
  Prediction out;
  out.mean = predict_mean(query);
  out.variance = std::max(variance_unclamped(query), 0.0);
  return out;
}

double SparsePosterior::predict_mean(const Vector& query) const {
  if (query.size() != pseudo_locations_.cols())
    throw InvalidInput("query dimension does not match model");
  return kernel_vector(pseudo_locations_, query, params_.kernel).dot(alpha_);
}

double SparsePosterior::variance_unclamped(const Vector& query) const {
  if (query.size() != pseudo_locations_.cols())
    throw InvalidInput("query dimension does not match model");
  const Vector ku = kernel_vector(pseudo_locations_, query, params_.kernel);
  return kernel_eval(query, query, params_.kernel) -
         ku.dot(lambda_ * ku);
}

PseudoPosterior pseudo_posterior(const Trajectory& traj,
                                 const ModelParams& params,
                                 const PseudoInputSet& pseudo) {
  FitWorkspace ws = assemble_workspace(traj, params, pseudo);
  // Project through plain kernel evaluations rather than the jittered
  // workspace matrix so the reported moments coincide with predict() at the
  // support locations.
  const Matrix k_support =
      kernel_matrix(pseudo.locations(), pseudo.locations(), params.kernel);
  PseudoPosterior out;
  out.mean = k_support * ws.alpha;
  out.covariance = k_support * ws.m_chol.solve(k_support);
  out.covariance =
      0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

double log_marginal_sparse(const Trajectory& traj, const ModelParams& params,
                           const PseudoInputSet& pseudo) {
  return assemble_workspace(traj, params, pseudo).log_marginal;
}

namespace {

// Shared contraction state for the gradient. With C the approximate reward
// covariance, c = C^{-1} r, phi_t = row t of kru * kuu^{-1}, the directional
// derivative along any parameter needs only the perturbations of kru, kuu,
// the diagonal correction and the noise, contracted against these.
struct GradContext {
  const FitWorkspace& ws;
  const Trajectory& traj;
  const ModelParams& params;
  Matrix phi_t;      // kuu^{-1} kru^T, one column per transition
  Vector c;          // C^{-1} r
  Vector c_sq;
  Matrix cinv_p;     // C^{-1} kru
  Matrix cinv_p_uinv;  // C^{-1} kru kuu^{-1}
  Vector diag_cinv;  // diagonal of C^{-1}
  Matrix r_uu;       // kuu^{-1} kru^T C^{-1} kru kuu^{-1}
  Vector beta;       // kuu^{-1} kru^T c

  GradContext(const FitWorkspace& ws_in, const Trajectory& traj_in,
              const ModelParams& params_in)
      : ws(ws_in), traj(traj_in), params(params_in) {
    const Index n = traj.transition_count();
    phi_t = ws.kuu_chol.solve(ws.kru.transpose());
    c = (traj.rewards().array() / ws.gamma.array()).matrix() -
        ws.w * ws.alpha;
    c_sq = c.array().square();
    const Matrix t_mat = ws.kru.transpose() * ws.w;
    cinv_p = ws.w - ws.w * ws.m_chol.solve(t_mat);
    cinv_p_uinv = ws.kuu_chol.solve(cinv_p.transpose()).transpose();
    const Matrix vw = ws.m_chol.matrixL().solve(ws.w.transpose());
    diag_cinv.resize(n);
    for (Index t = 0; t < n; ++t)
      diag_cinv[t] = 1.0 / ws.gamma[t] - vw.col(t).squaredNorm();
    const Matrix g_mat = ws.kru.transpose() * cinv_p;
    r_uu = ws.kuu_chol.solve(ws.kuu_chol.solve(g_mat).transpose());
    r_uu = 0.5 * (r_uu + r_uu.transpose()).eval();
    beta = ws.kuu_chol.solve(ws.kru.transpose() * c);
  }

  // Derivative for a parameter perturbing the full workspace: p_dot and
  // u_dot are the perturbations of kru and kuu, d_dot of the prior reward
  // variance diagonal, s2_dot of the noise.
  double dense_direction(const Matrix& p_dot, const Matrix& u_dot,
                         const Vector& d_dot, double s2_dot) const {
    const Index n = traj.transition_count();
    const Matrix u_phi = u_dot * phi_t;  // one column per transition

    double trace = 2.0 * (p_dot.array() * cinv_p_uinv.array()).sum() -
                   (u_dot.array() * r_uu.array()).sum();
    double quad = 2.0 * (p_dot.transpose() * c).dot(beta) -
                  beta.dot(u_dot * beta);
    for (Index t = 0; t < n; ++t) {
      double d_hat = s2_dot;
      if (!ws.q_clamped[static_cast<size_t>(t)]) {
        const double s_dot_tt = 2.0 * p_dot.row(t).dot(phi_t.col(t)) -
                                phi_t.col(t).dot(u_phi.col(t));
        d_hat += d_dot[t] - s_dot_tt;
      }
      trace += d_hat * diag_cinv[t];
      quad += d_hat * c_sq[t];
    }
    return -0.5 * trace + 0.5 * quad;
  }

  // Derivative along one support coordinate: kuu changes only in row and
  // column j (perturbation vector a_dot) and kru only in column j
  // (perturbation p_vec).
  double support_direction(Index j, const Vector& a_dot,
                           const Vector& p_vec) const {
    const Index n = traj.transition_count();
    const Vector u_vec = phi_t.transpose() * a_dot;

    double trace = 2.0 * p_vec.dot(cinv_p_uinv.col(j)) -
                   2.0 * a_dot.dot(r_uu.col(j));
    double quad = 2.0 * p_vec.dot(c) * beta[j] -
                  2.0 * a_dot.dot(beta) * beta[j];
    for (Index t = 0; t < n; ++t) {
      if (ws.q_clamped[static_cast<size_t>(t)]) continue;
      const double d_hat = 2.0 * phi_t(j, t) * (u_vec[t] - p_vec[t]);
      trace += d_hat * diag_cinv[t];
      quad += d_hat * c_sq[t];
    }
    return -0.5 * trace + 0.5 * quad;
  }
};

}  // namespace

LogMarginalWithGrad log_marginal_with_grad(const Trajectory& traj,
                                           const ModelParams& params,
                                           const PseudoInputSet& pseudo) {
  FitWorkspace ws = assemble_workspace(traj, params, pseudo);
  const GradContext ctx(ws, traj, params);

  const Matrix& x = traj.inputs();
  const Matrix& z = pseudo.locations();
  const Index n = traj.transition_count();
  const Index m = pseudo.count();
  const Index dim = traj.dim();
  const double gamma = params.discount;
  const Vector inv_sq = params.kernel.inv_sq_length_scales();

  LogMarginalWithGrad out;
  out.value = ws.log_marginal;
  out.grad.resize(grad_size(dim, m));
  Index at = 0;

  // Log signal variance: every covariance entry, including the
  // signal-proportional jitter, scales linearly.
  out.grad[at++] = ctx.dense_direction(ws.kru, ws.kuu, ws.diag_rr, 0.0);

  // Log inverse-square length scales.
  for (Index d = 0; d < dim; ++d) {
    const double ls = inv_sq[d];
    Matrix kqu_dot(x.rows(), m);
    for (Index j = 0; j < m; ++j)
      kqu_dot.col(j) = (-0.5 * ls) *
                       (x.col(d).array() - z(j, d)).square() *
                       ws.kqu.col(j).array();
    const Matrix p_dot = ws.td.apply_left(kqu_dot);

    Matrix u_dot(m, m);
    for (Index j = 0; j < m; ++j)
      u_dot.col(j) = (-0.5 * ls) *
                     (z.col(d).array() - z(j, d)).square() *
                     ws.kuu.col(j).array();

    Vector d_dot = Vector::Zero(n);
    for (Index t = 0; t < n; ++t) {
      if (params.terminal_value_zero && traj.is_terminal(t)) continue;
      const auto [a, b] = traj.transition_inputs(t);
      const double delta = x(a, d) - x(b, d);
      d_dot[t] = gamma * ls * delta * delta * ws.cross_cov[t];
    }
    out.grad[at++] = ctx.dense_direction(p_dot, u_dot, d_dot, 0.0);
  }

  // Log noise variance.
  out.grad[at++] =
      -0.5 * params.noise_variance *
      (ctx.diag_cinv.sum() - ctx.c_sq.sum());

  // Support coordinates, row-major.
  for (Index j = 0; j < m; ++j) {
    for (Index d = 0; d < dim; ++d) {
      const double ls = inv_sq[d];
      const Vector a_dot =
          (ls * (z.col(d).array() - z(j, d)) * ws.kuu.col(j).array())
              .matrix();
      const Vector kcol_dot =
          (ls * (x.col(d).array() - z(j, d)) * ws.kqu.col(j).array())
              .matrix();
      out.grad[at++] =
          ctx.support_direction(j, a_dot, ws.td.apply(kcol_dot));
    }
  }

  if (!out.grad.allFinite())
    throw IllConditionedModel("sparse log marginal gradient is not finite");
  return out;
}

Vector log_marginal_grad(const Trajectory& traj, const ModelParams& params,
                         const PseudoInputSet& pseudo) {
  return log_marginal_with_grad(traj, params, pseudo).grad;
}

}  // namespace sgptd
