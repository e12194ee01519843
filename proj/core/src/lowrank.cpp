#include <sgptd/lowrank.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <sgptd/kernel.hpp>
#include <sgptd/td_operator.hpp>

namespace sgptd {

Dictionary::Dictionary(KernelParams kernel) : kernel_(std::move(kernel)) {
  kernel_.validate();
  reserve(16);
}

void Dictionary::reserve(Index capacity) {
  if (capacity <= locations_.rows()) return;
  Matrix locations = Matrix::Zero(capacity, kernel_.dim());
  Matrix chol = Matrix::Zero(capacity, capacity);
  locations.topRows(size_) = locations_.topRows(size_);
  chol.topLeftCorner(size_, size_) = chol_.topLeftCorner(size_, size_);
  locations_ = std::move(locations);
  chol_ = std::move(chol);
}

Dictionary::Novelty Dictionary::novelty(const Vector& x) const {
  if (x.size() != kernel_.dim())
    throw InvalidInput("candidate dimension does not match dictionary");
  Novelty out;
  const double kxx = kernel_eval(x, x, kernel_);
  if (size_ == 0) {
    out.delta = kxx;
    out.coefficients.resize(0);
    return out;
  }
  const Vector k = kernel_vector(locations_.topRows(size_), x, kernel_);
  const auto l = chol_.topLeftCorner(size_, size_)
                     .triangularView<Eigen::Lower>();
  const Vector y = l.solve(k);
  out.delta = std::max(kxx - y.squaredNorm(), 0.0);
  out.coefficients = l.transpose().solve(y);
  return out;
}

void Dictionary::admit(const Vector& x) {
  if (x.size() != kernel_.dim())
    throw InvalidInput("candidate dimension does not match dictionary");
  const double kxx = kernel_eval(x, x, kernel_);
  const double jitter = kDiagonalJitter * kernel_.signal_variance();

  Vector y;
  double raw = kxx;
  if (size_ > 0) {
    const Vector k = kernel_vector(locations_.topRows(size_), x, kernel_);
    y = chol_.topLeftCorner(size_, size_)
            .triangularView<Eigen::Lower>()
            .solve(k);
    raw -= y.squaredNorm();
  }
  // An exact duplicate of a dictionary row leaves a residual of at most the
  // diagonal jitter, so anything inside twice that floor is indistinguishable
  // from a represented point at the factorization's resolution.
  if (!(raw > 2.0 * jitter) || !std::isfinite(raw))
    throw InvalidInput("candidate already represented by the dictionary");

  if (size_ + 1 > locations_.rows()) reserve(2 * locations_.rows());
  locations_.row(size_) = x.transpose();
  if (size_ > 0) chol_.row(size_).head(size_) = y.transpose();
  chol_(size_, size_) = std::sqrt(raw + jitter);
  ++size_;
}

namespace {

std::vector<char> episode_start_inputs(const Trajectory& traj) {
  std::vector<char> first(static_cast<size_t>(traj.input_count()), 0);
  Index start_t = 0;
  for (Index e = 0; e < traj.episode_count(); ++e) {
    first[static_cast<size_t>(start_t + e)] = 1;
    start_t = traj.episode_breaks()[static_cast<size_t>(e)] + 1;
  }
  return first;
}

}  // namespace

LowRankPosterior fit_lowrank(const Trajectory& traj, const ModelParams& params,
                             double nu) {
  params.validate();
  if (!(nu > 0.0))
    throw InvalidInput("rejection threshold must be positive");
  if (traj.empty())
    throw InvalidInput("cannot fit a low-rank posterior without transitions");
  traj.validate();
  if (traj.dim() != params.kernel.dim())
    throw InvalidInput("trajectory dimension does not match kernel");

  const Index n_in = traj.input_count();
  const std::vector<char> anchors = episode_start_inputs(traj);

  // Candidates inside the dictionary's representability floor would be
  // rejected by admit() regardless of the threshold, so the gate is clamped
  // to it; this keeps repeated episode starts from forcing a duplicate row.
  const double floor =
      2.0 * kDiagonalJitter * params.kernel.signal_variance();

  Dictionary dict(params.kernel);
  struct Record {
    bool admitted = false;
    Index position = 0;
    Vector coefficients;
  };
  std::vector<Record> records(static_cast<size_t>(n_in));
  for (Index i = 0; i < n_in; ++i) {
    const Vector x = traj.inputs().row(i).transpose();
    auto nov = dict.novelty(x);
    Record& rec = records[static_cast<size_t>(i)];
    const double threshold =
        std::max(anchors[static_cast<size_t>(i)] ? 1e-10 : nu, floor);
    const bool admit = nov.delta > threshold;
    if (admit) {
      rec.admitted = true;
      rec.position = dict.size();
      dict.admit(x);
    } else {
      rec.coefficients = std::move(nov.coefficients);
    }
  }

  const Index m = dict.size();
  Matrix projection = Matrix::Zero(n_in, m);
  Index admitted_count = 0;
  for (Index i = 0; i < n_in; ++i) {
    const Record& rec = records[static_cast<size_t>(i)];
    if (rec.admitted) {
      projection(i, rec.position) = 1.0;
      ++admitted_count;
    } else {
      projection.row(i).head(rec.coefficients.size()) =
          rec.coefficients.transpose();
    }
  }

  const TdOperator td(traj, params.discount, params.terminal_value_zero);
  const Vector& r = traj.rewards();
  const Index n = traj.transition_count();
  const double s2 = params.noise_variance;

  const Matrix atil = td.apply_left(projection);
  const Matrix u = atil * dict.cholesky_factor();
  Matrix sm = s2 * Matrix::Identity(m, m) + u.transpose() * u;
  sm = 0.5 * (sm + sm.transpose()).eval();
  auto sm_chol = cholesky_with_jitter(sm, "projected system matrix");

  const Vector ur = u.transpose() * r;
  const Vector cinv_r = (r - u * sm_chol.llt.solve(ur)) / s2;
  const Matrix ua = u.transpose() * atil;
  Matrix lambda =
      (atil.transpose() * atil - ua.transpose() * sm_chol.llt.solve(ua)) / s2;
  lambda = 0.5 * (lambda + lambda.transpose()).eval();

  LowRankPosterior post;
  post.dictionary_ = dict.locations();
  post.weights_ = atil.transpose() * cinv_r;
  post.lambda_ = std::move(lambda);
  post.projection_ = std::move(projection);
  post.params_ = params;
  post.retention_ =
      static_cast<double>(admitted_count) / static_cast<double>(n_in);

  const double logdet = static_cast<double>(n - m) * std::log(s2) +
                        log_det_from_cholesky(sm_chol.llt);
  const double quad = r.dot(cinv_r);
  post.log_marginal_ =
      -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) +
              logdet + quad);
  if (!std::isfinite(post.log_marginal_))
    throw IllConditionedModel("low-rank log marginal is not finite");
  return post;
}

Prediction LowRankPosterior::predict(const Vector& query) const {
  Prediction out;
  out.mean = predict_mean(query);
  out.variance = std::max(variance_unclamped(query), 0.0);
  return out;
}

double LowRankPosterior::predict_mean(const Vector& query) const {
  if (query.size() != dictionary_.cols())
    throw InvalidInput("query dimension does not match model");
  return kernel_vector(dictionary_, query, params_.kernel).dot(weights_);
}

double LowRankPosterior::variance_unclamped(const Vector& query) const {
  if (query.size() != dictionary_.cols())
    throw InvalidInput("query dimension does not match model");
  const Vector k = kernel_vector(dictionary_, query, params_.kernel);
  return kernel_eval(query, query, params_.kernel) - k.dot(lambda_ * k);
}

}  // namespace sgptd
