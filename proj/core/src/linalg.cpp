#include <sgptd/linalg.hpp>

#include <array>
#include <cmath>

namespace sgptd {

CholeskyResult cholesky_with_jitter(const Matrix& a, std::string_view label) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InvalidInput("cholesky: matrix must be square and non-empty");
  }
  // LLT silently produces garbage on NaN/Inf input, so reject it here; this
  // is also what lets the hyperparameter search treat overflowed kernel
  // matrices as infeasible points.
  if (!a.allFinite()) {
    throw IllConditionedModel(std::string(label) + ": non-finite entries");
  }
  const double mean_diag = a.diagonal().mean();
  const std::array<double, 4> rungs = {0.0, 1e-8, 1e-6, 1e-4};
  Matrix work = a;
  for (double rung : rungs) {
    const double jitter = rung * std::abs(mean_diag);
    if (rung > 0.0) {
      work = a + jitter * Matrix::Identity(a.rows(), a.cols());
    }
    CholeskyResult result{Eigen::LLT<Matrix>(work), jitter};
    if (result.llt.info() == Eigen::Success &&
        result.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      return result;
    }
  }
  throw IllConditionedModel(std::string(label) +
                            ": not positive definite after jitter escalation");
}

double log_det_from_cholesky(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace sgptd
