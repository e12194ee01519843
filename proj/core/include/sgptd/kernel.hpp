#pragma once

#include <cmath>

#include <sgptd/common.hpp>

namespace sgptd {

/// Base jitter added to kernel-matrix diagonals before factorization,
/// as a fraction of the signal variance.
inline constexpr double kDiagonalJitter = 1e-8;

/// Hyperparameters of the squared-exponential ARD covariance, stored in
/// log space so positivity is structural instead of a constraint.
///
/// With sf = exp(log_signal_variance) and l_d = exp(log_length_scales[d]),
///
///   k(x, y) = sf * exp(-0.5 * sum_d l_d * (x_d - y_d)^2).
///
/// The l_d are inverse-square length scales (units 1/length^2): a larger
/// l_d means faster decay along dimension d.
struct KernelParams {
  double log_signal_variance = 0.0;
  Vector log_length_scales;

  Index dim() const { return log_length_scales.size(); }
  double signal_variance() const { return std::exp(log_signal_variance); }
  Vector inv_sq_length_scales() const {
    return log_length_scales.array().exp();
  }

  /// One shared length scale across `dim` input dimensions.
  static KernelParams isotropic(Index dim, double log_signal_variance = 0.0,
                                double log_length_scale = 0.0);

  /// Throws InvalidInput if any entry is non-finite.
  void validate() const;
};

/// k(x, y); symmetric in its arguments.
double kernel_eval(const Vector& x, const Vector& y, const KernelParams& p);

/// Cross-covariance matrix between two point sets (points stored as rows).
/// kernel_matrix(A, A, p) is symmetric positive semidefinite.
Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelParams& p);

/// Column vector of k(a_i, x) for every row of `a`.
Vector kernel_vector(const Matrix& a, const Vector& x, const KernelParams& p);

/// Partials of k(x, y) with respect to the log hyperparameters, ordered
/// [log_signal_variance, log_length_scales[0..D-1]].
/// d k / d log_sf = k;  d k / d log_l_d = -0.5 * l_d * (x_d - y_d)^2 * k.
Vector kernel_grad_params(const Vector& x, const Vector& y,
                          const KernelParams& p);

enum class KernelArg { First, Second };

/// Partial of k(x, y) with respect to one coordinate of one argument:
/// d k / d x_d = -l_d * (x_d - y_d) * k;  d k / d y_d is its negation.
double kernel_grad_input(const Vector& x, const Vector& y,
                         const KernelParams& p, KernelArg which, Index coord);

}  // namespace sgptd
