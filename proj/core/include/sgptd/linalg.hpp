#pragma once

#include <Eigen/Cholesky>

#include <string_view>

#include <sgptd/common.hpp>

namespace sgptd {

/// Lower-triangular Cholesky factorization plus the diagonal inflation that
/// was needed to obtain it.
struct CholeskyResult {
  Eigen::LLT<Matrix> llt;
  double applied_jitter = 0.0;
};

/// Factorizes a symmetric positive-definite matrix, escalating diagonal
/// jitter (0, then 1e-8, 1e-6, 1e-4 relative to the mean diagonal) until the
/// factorization succeeds. Throws IllConditionedModel when all rungs fail;
/// `label` names the offending matrix in the message.
CholeskyResult cholesky_with_jitter(const Matrix& a, std::string_view label);

/// Twice the sum of log diagonal entries of the Cholesky factor, i.e.
/// log det of the factorized matrix.
double log_det_from_cholesky(const Eigen::LLT<Matrix>& llt);

}  // namespace sgptd
