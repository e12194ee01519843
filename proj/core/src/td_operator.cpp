#include <sgptd/td_operator.hpp>

namespace sgptd {

TdOperator::TdOperator(const Trajectory& traj, double discount,
                       bool terminal_value_zero) {
  if (traj.empty())
    throw InvalidInput("cannot build a TD operator from an empty trajectory");
  cols_ = traj.input_count();
  rows_.reserve(static_cast<size_t>(traj.transition_count()));
  for (Index t = 0; t < traj.transition_count(); ++t) {
    auto [src, succ] = traj.transition_inputs(t);
    Row row{src, succ, -discount};
    if (terminal_value_zero && traj.is_terminal(t)) {
      row.successor = -1;
      row.neg_discount = 0.0;
    }
    rows_.push_back(row);
  }
}

Vector TdOperator::apply(const Vector& values) const {
  if (values.size() != cols_)
    throw InvalidInput("TD operator apply: value vector length mismatch");
  Vector out(rows());
  for (Index t = 0; t < rows(); ++t) {
    const Row& row = rows_[static_cast<size_t>(t)];
    out[t] = values[row.source];
    if (row.successor >= 0) out[t] += row.neg_discount * values[row.successor];
  }
  return out;
}

Vector TdOperator::apply_transpose(const Vector& u) const {
  if (u.size() != rows())
    throw InvalidInput("TD operator apply_transpose: length mismatch");
  Vector out = Vector::Zero(cols_);
  for (Index t = 0; t < rows(); ++t) {
    const Row& row = rows_[static_cast<size_t>(t)];
    out[row.source] += u[t];
    if (row.successor >= 0) out[row.successor] += row.neg_discount * u[t];
  }
  return out;
}

Matrix TdOperator::apply_left(const Matrix& a) const {
  if (a.rows() != cols_)
    throw InvalidInput("TD operator apply_left: row count mismatch");
  Matrix out(rows(), a.cols());
  for (Index t = 0; t < rows(); ++t) {
    const Row& row = rows_[static_cast<size_t>(t)];
    out.row(t) = a.row(row.source);
    if (row.successor >= 0)
      out.row(t) += row.neg_discount * a.row(row.successor);
  }
  return out;
}

Matrix TdOperator::apply_right_transpose(const Matrix& a) const {
  if (a.cols() != cols_)
    throw InvalidInput("TD operator apply_right_transpose: column mismatch");
  Matrix out(a.rows(), rows());
  for (Index t = 0; t < rows(); ++t) {
    const Row& row = rows_[static_cast<size_t>(t)];
    out.col(t) = a.col(row.source);
    if (row.successor >= 0)
      out.col(t) += row.neg_discount * a.col(row.successor);
  }
  return out;
}

Matrix TdOperator::to_dense() const {
  Matrix h = Matrix::Zero(rows(), cols_);
  for (Index t = 0; t < rows(); ++t) {
    const Row& row = rows_[static_cast<size_t>(t)];
    h(t, row.source) = 1.0;
    if (row.successor >= 0) h(t, row.successor) = row.neg_discount;
  }
  return h;
}

}  // namespace sgptd
