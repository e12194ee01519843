#pragma once

#include <vector>

#include <sgptd/common.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

/// Sparse linear map from latent values at trajectory inputs to expected
/// one-step returns. Row t picks the source value of transition t and
/// subtracts the discounted successor value; with terminal_value_zero the
/// successor column is dropped on each episode's last transition.
class TdOperator {
 public:
  TdOperator() = default;
  TdOperator(const Trajectory& traj, double discount,
             bool terminal_value_zero);

  Index rows() const { return static_cast<Index>(rows_.size()); }
  Index cols() const { return cols_; }

  /// H * v for a vector of latent values.
  Vector apply(const Vector& values) const;
  /// H^T * u.
  Vector apply_transpose(const Vector& u) const;
  /// H * A, applied row-block-wise to a matrix with one row per input.
  Matrix apply_left(const Matrix& a) const;
  /// A * H^T for a matrix with one column per input.
  Matrix apply_right_transpose(const Matrix& a) const;
  Matrix to_dense() const;

  struct Row {
    Index source;
    Index successor;       // -1 when the successor value is pinned to zero
    double neg_discount;   // coefficient on the successor column
  };
  const std::vector<Row>& entries() const { return rows_; }

 private:
  std::vector<Row> rows_;
  Index cols_ = 0;
};

}  // namespace sgptd
