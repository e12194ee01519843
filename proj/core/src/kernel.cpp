#include <sgptd/kernel.hpp>

namespace sgptd {

namespace {

void check_dims(const Vector& x, const Vector& y, const KernelParams& p) {
  if (x.size() != y.size() || x.size() != p.dim()) {
    throw InvalidInput("kernel: input dimensions disagree (x " +
                       std::to_string(x.size()) + ", y " +
                       std::to_string(y.size()) + ", params " +
                       std::to_string(p.dim()) + ")");
  }
}

}  // namespace

KernelParams KernelParams::isotropic(Index dim, double log_signal_variance,
                                     double log_length_scale) {
  KernelParams p;
  p.log_signal_variance = log_signal_variance;
  p.log_length_scales = Vector::Constant(dim, log_length_scale);
  return p;
}

void KernelParams::validate() const {
  if (!std::isfinite(log_signal_variance) ||
      !log_length_scales.allFinite()) {
    throw InvalidInput("kernel: hyperparameters must be finite");
  }
  if (log_length_scales.size() == 0) {
    throw InvalidInput("kernel: empty length-scale vector");
  }
}

double kernel_eval(const Vector& x, const Vector& y, const KernelParams& p) {
  check_dims(x, y, p);
  const Vector ls = p.inv_sq_length_scales();
  const double quad = (ls.array() * (x - y).array().square()).sum();
  return p.signal_variance() * std::exp(-0.5 * quad);
}

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelParams& p) {
  if (a.cols() != b.cols() || a.cols() != p.dim()) {
    throw InvalidInput("kernel_matrix: input dimensions disagree");
  }
  const Vector ls = p.inv_sq_length_scales();
  const double sf = p.signal_variance();
  Matrix out(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      const double quad =
          (ls.array() * (a.row(i) - b.row(j)).transpose().array().square())
              .sum();
      out(i, j) = sf * std::exp(-0.5 * quad);
    }
  }
  return out;
}

Vector kernel_vector(const Matrix& a, const Vector& x, const KernelParams& p) {
  if (a.cols() != x.size() || x.size() != p.dim()) {
    throw InvalidInput("kernel_vector: input dimensions disagree");
  }
  const Vector ls = p.inv_sq_length_scales();
  const double sf = p.signal_variance();
  Vector out(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double quad =
        (ls.array() * (a.row(i).transpose() - x).array().square()).sum();
    out(i) = sf * std::exp(-0.5 * quad);
  }
  return out;
}

Vector kernel_grad_params(const Vector& x, const Vector& y,
                          const KernelParams& p) {
  check_dims(x, y, p);
  const double k = kernel_eval(x, y, p);
  const Vector ls = p.inv_sq_length_scales();
  Vector g(1 + p.dim());
  g(0) = k;  // log-scale chain rule
  for (Index d = 0; d < p.dim(); ++d) {
    const double dx = x(d) - y(d);
    g(1 + d) = -0.5 * ls(d) * dx * dx * k;
  }
  return g;
}

double kernel_grad_input(const Vector& x, const Vector& y,
                         const KernelParams& p, KernelArg which, Index coord) {
  check_dims(x, y, p);
  if (coord < 0 || coord >= p.dim()) {
    throw InvalidInput("kernel_grad_input: coordinate out of range");
  }
  const double k = kernel_eval(x, y, p);
  const double l = std::exp(p.log_length_scales(coord));
  const double g = -l * (x(coord) - y(coord)) * k;
  return which == KernelArg::First ? g : -g;
}

}  // namespace sgptd
