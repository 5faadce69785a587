#include "cpmap/kernels.hpp"

#include "cpmap/error.hpp"

#include <cmath>
#include <string>

namespace cpmap {

namespace {

inline void row_product(const SparseOperator& A, const Field& X, std::size_t r, double* out) {
  const Eigen::Index n = X.cols();
  for (Eigen::Index c = 0; c < n; ++c) out[c] = 0;
  for (auto e = A.row_ptr[r]; e < A.row_ptr[r + 1]; ++e) {
    const double w = A.val[e];
    const double* x = X.data() + static_cast<std::size_t>(A.col[e]) * n;
    for (Eigen::Index c = 0; c < n; ++c) out[c] += w * x[c];
  }
}

inline void row_euler(const SparseOperator& A, const Field& X, double s, std::size_t r, double* out) {
  const Eigen::Index n = X.cols();
  const double* self = X.data() + r * n;
  if (A.row_ptr[r] == A.row_ptr[r + 1]) {
    for (Eigen::Index c = 0; c < n; ++c) out[c] = self[c];
    return;
  }
  double acc[kMaxDim];
  row_product(A, X, r, acc);
  for (Eigen::Index c = 0; c < n; ++c) out[c] = self[c] + s * acc[c];
}

inline bool row_project(const Surface& target, const Field& X, std::size_t r, Field& Y, bool& nonfinite) {
  const Eigen::Index n = X.cols();
  Point q(n);
  for (Eigen::Index c = 0; c < n; ++c) q[c] = X(r, c);
  if (!q.allFinite()) {
    nonfinite = true;
    return false;
  }
  const CpResult res = target.closest_point_any(q);
  for (Eigen::Index c = 0; c < n; ++c) Y(r, c) = res.cp[c];
  return res.unique;
}

void prepare(const SparseOperator& A, const Field& X, Field& Y) {
  if (static_cast<std::size_t>(X.rows()) != A.cols) throw ValidationError("field", "operator/field size mismatch");
  if (X.cols() > kMaxDim) throw ValidationError("field", "too many field components");
  Y.resize(static_cast<Eigen::Index>(A.rows), X.cols());
}

}  // namespace

void spmv(const SparseOperator& A, const Field& X, Field& Y) {
  prepare(A, X, Y);
  const auto rows = static_cast<std::ptrdiff_t>(A.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) row_product(A, X, r, Y.data() + r * X.cols());
}

void spmv_serial(const SparseOperator& A, const Field& X, Field& Y) {
  prepare(A, X, Y);
  for (std::size_t r = 0; r < A.rows; ++r) row_product(A, X, r, Y.data() + r * X.cols());
}

void euler_update(const SparseOperator& A, const Field& X, double s, Field& Y) {
  prepare(A, X, Y);
  const auto rows = static_cast<std::ptrdiff_t>(A.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) row_euler(A, X, s, r, Y.data() + r * X.cols());
}

void euler_update_serial(const SparseOperator& A, const Field& X, double s, Field& Y) {
  prepare(A, X, Y);
  for (std::size_t r = 0; r < A.rows; ++r) row_euler(A, X, s, r, Y.data() + r * X.cols());
}

ProjectionOutcome project_rows(const Surface& target, const Field& X, Field& Y) {
  Y.resize(X.rows(), X.cols());
  const auto rows = static_cast<std::ptrdiff_t>(X.rows());
  std::size_t failed = kNoFailure;
  std::size_t failed_nonfinite = kNoFailure;
#pragma omp parallel for schedule(static) reduction(min : failed, failed_nonfinite)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    bool nonfinite = false;
    if (!row_project(target, X, r, Y, nonfinite)) {
      failed = std::min(failed, static_cast<std::size_t>(r));
      if (nonfinite) failed_nonfinite = std::min(failed_nonfinite, static_cast<std::size_t>(r));
    }
  }
  return {failed, failed != kNoFailure && failed == failed_nonfinite};
}

ProjectionOutcome project_rows_serial(const Surface& target, const Field& X, Field& Y) {
  Y.resize(X.rows(), X.cols());
  ProjectionOutcome out;
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    bool nonfinite = false;
    if (!row_project(target, X, r, Y, nonfinite) && out.failed_row == kNoFailure) {
      out.failed_row = static_cast<std::size_t>(r);
      out.nonfinite = nonfinite;
    }
  }
  return out;
}

void raise_projection_failure(const ProjectionOutcome& out, const char* where) {
  if (out.failed_row == kNoFailure) return;
  const auto node = std::to_string(out.failed_row);
  if (out.nonfinite)
    throw SolverError("Divergence", out.failed_row, std::string(where) + ": non-finite value at node " + node);
  throw SolverError("DegenerateQuery", out.failed_row,
                    std::string(where) + ": closest point not unique at node " + node);
}

}  // namespace cpmap
