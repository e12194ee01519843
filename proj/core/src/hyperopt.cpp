#include <sgptd/hyperopt.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include <sgptd/lbfgs.hpp>

namespace sgptd {

void OptimConfig::validate() const {
  if (max_iterations < 0) throw InvalidInput("max_iterations must be >= 0");
  if (!(gradient_tolerance > 0.0))
    throw InvalidInput("gradient_tolerance must be positive");
  if (regularization_weight < 0.0)
    throw InvalidInput("regularization_weight must be >= 0");
  if (restarts < 1) throw InvalidInput("restarts must be >= 1");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Index hyper_count(Index dim) { return 2 + dim; }

Vector pack(const ModelParams& params, const Matrix& z) {
  const Index dim = params.kernel.dim();
  Vector x(grad_size(dim, z.rows()));
  x[0] = params.kernel.log_signal_variance;
  x.segment(1, dim) = params.kernel.log_length_scales;
  x[1 + dim] = std::log(params.noise_variance);
  for (Index j = 0; j < z.rows(); ++j)
    x.segment(hyper_count(dim) + j * dim, dim) = z.row(j).transpose();
  return x;
}

void unpack(const Vector& x, Index dim, Index m, ModelParams& params,
            Matrix& z) {
  params.kernel.log_signal_variance = x[0];
  params.kernel.log_length_scales = x.segment(1, dim);
  params.noise_variance = std::exp(x[1 + dim]);
  z.resize(m, dim);
  for (Index j = 0; j < m; ++j)
    z.row(j) = x.segment(hyper_count(dim) + j * dim, dim).transpose();
}

// Quadratic penalty over the whole packed vector: log-hyperparameters,
// log noise and support coordinates alike.
double regularizer(const Vector& x, double weight, Vector& grad) {
  grad = 2.0 * weight * x;
  return weight * x.squaredNorm();
}

}  // namespace

ObjectiveValue objective(const Trajectory& traj, const ModelParams& params,
                         const PseudoInputSet& pseudo,
                         const OptimConfig& config) {
  config.validate();
  auto lm = log_marginal_with_grad(traj, params, pseudo);
  const Vector x = pack(params, pseudo.locations());
  Vector reg_grad;
  const double reg = regularizer(x, config.regularization_weight, reg_grad);
  ObjectiveValue out;
  out.value = lm.value - reg;
  out.grad = lm.grad - reg_grad;
  return out;
}

OptimResult optimize(const Trajectory& traj, const ModelParams& init_params,
                     const PseudoInputSet& init_pseudo,
                     const OptimConfig& config) {
  config.validate();
  init_params.validate();
  const Index dim = traj.dim();
  const Index m = init_pseudo.count();
  const Index nh = hyper_count(dim);
  const bool pseudo_only = config.scope == OptimScope::PseudoOnly;

  const Vector x_full_init = pack(init_params, init_pseudo.locations());

  // The optimizer works on the active slice; frozen coordinates are
  // spliced back in before each evaluation.
  auto active_of = [&](const Vector& full) -> Vector {
    if (!pseudo_only) return full;
    return full.tail(m * dim);
  };
  auto full_of = [&](const Vector& active) -> Vector {
    if (!pseudo_only) return active;
    Vector full = x_full_init;
    full.tail(m * dim) = active;
    return full;
  };

  auto eval = [&](const Vector& active, Vector& grad) -> double {
    const Vector full = full_of(active);
    ModelParams params = init_params;
    Matrix z;
    unpack(full, dim, m, params, z);
    try {
      PseudoInputSet pseudo(std::move(z));
      auto lm = log_marginal_with_grad(traj, params, pseudo);
      Vector reg_grad;
      const double reg =
          regularizer(full, config.regularization_weight, reg_grad);
      Vector full_grad = lm.grad - reg_grad;
      grad = pseudo_only ? Vector(full_grad.tail(m * dim)) : full_grad;
      return -(lm.value - reg);
    } catch (const InvalidInput&) {
      return kInf;
    } catch (const IllConditionedModel&) {
      return kInf;
    }
  };

  LbfgsOptions opts;
  opts.max_iterations = config.max_iterations;
  opts.gradient_tolerance = config.gradient_tolerance;

  std::mt19937_64 rng(config.rng_seed);
  std::normal_distribution<double> unit;

  bool have_best = false;
  LbfgsResult best;
  for (int restart = 0; restart < config.restarts; ++restart) {
    Vector start = active_of(x_full_init);
    if (restart > 0) {
      // Perturb hyperparameters mildly and support locations within a
      // fraction of the input range.
      Vector noise(start.size());
      for (Index i = 0; i < noise.size(); ++i) noise[i] = unit(rng);
      if (pseudo_only) {
        for (Index j = 0; j < m; ++j)
          for (Index d = 0; d < dim; ++d) {
            const double range = traj.inputs().col(d).maxCoeff() -
                                 traj.inputs().col(d).minCoeff();
            start[j * dim + d] +=
                0.1 * (range > 0.0 ? range : 1.0) * noise[j * dim + d];
          }
      } else {
        start.head(nh) += 0.3 * noise.head(nh);
        for (Index j = 0; j < m; ++j)
          for (Index d = 0; d < dim; ++d) {
            const double range = traj.inputs().col(d).maxCoeff() -
                                 traj.inputs().col(d).minCoeff();
            start[nh + j * dim + d] +=
                0.1 * (range > 0.0 ? range : 1.0) * noise[nh + j * dim + d];
          }
      }
    }
    LbfgsResult run = minimize(eval, std::move(start), opts);
    if (!std::isfinite(run.f)) continue;
    if (!have_best || run.f < best.f) {
      best = std::move(run);
      have_best = true;
    }
  }
  if (!have_best)
    throw OptimizationFailed(
        "no restart reached a feasible point during evidence maximization");

  ModelParams params = init_params;
  Matrix z;
  unpack(full_of(best.x), dim, m, params, z);
  // Frozen coordinates must come back bit-for-bit, not via exp(log(x)).
  if (pseudo_only) params = init_params;
  OptimResult out{std::move(params), PseudoInputSet(std::move(z)), -best.f,
                  best.iterations, best.converged, {}};
  out.trace.reserve(best.trace.size());
  for (double f : best.trace) out.trace.push_back(-f);
  return out;
}

PseudoInputSet init_pseudo(const Trajectory& traj, Index m,
                           PseudoInit strategy, std::uint64_t seed,
                           double jitter_scale) {
  if (m < 1) throw InvalidInput("need at least one support location");
  if (traj.input_count() == 0)
    throw InvalidInput("cannot draw support locations from an empty trajectory");
  const Matrix& inputs = traj.inputs();
  const Index n = inputs.rows();
  const Index dim = inputs.cols();

  Vector lo(dim), range(dim);
  for (Index d = 0; d < dim; ++d) {
    lo[d] = inputs.col(d).minCoeff();
    const double r = inputs.col(d).maxCoeff() - lo[d];
    range[d] = r > 0.0 ? r : 1.0;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  double scale = jitter_scale;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Matrix z(m, dim);
    if (strategy == PseudoInit::UniformRange) {
      for (Index j = 0; j < m; ++j)
        for (Index d = 0; d < dim; ++d)
          z(j, d) = lo[d] + range[d] * uniform(rng);
    } else {
      std::vector<Index> order(static_cast<size_t>(n));
      for (Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
      if (m <= n) {
        // Partial Fisher-Yates draw of m distinct rows.
        for (Index j = 0; j < m; ++j) {
          std::uniform_int_distribution<Index> pick(j, n - 1);
          std::swap(order[static_cast<size_t>(j)],
                    order[static_cast<size_t>(pick(rng))]);
          z.row(j) = inputs.row(order[static_cast<size_t>(j)]);
        }
      } else {
        std::uniform_int_distribution<Index> pick(0, n - 1);
        for (Index j = 0; j < m; ++j) z.row(j) = inputs.row(pick(rng));
      }
      if (scale > 0.0)
        for (Index j = 0; j < m; ++j)
          for (Index d = 0; d < dim; ++d)
            z(j, d) += scale * range[d] * unit(rng);
    }
    try {
      return PseudoInputSet(std::move(z));
    } catch (const InvalidInput&) {
      scale = scale > 0.0 ? 10.0 * scale : 1e-6;
    }
  }
  throw OptimizationFailed(
      "could not draw non-colliding support locations");
}

}  // namespace sgptd
