#pragma once

#include "cpmap/band.hpp"
#include "cpmap/geometry.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <limits>

namespace cpmap {

/// Per-node values of a vector field: one row per node, one column per
/// component of the target embedding space.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-parallel kernels and their serial references. Each row is computed
// independently in stored order, so both variants give bitwise-identical
// results regardless of thread count.

/// Y = A X.
void spmv(const SparseOperator& A, const Field& X, Field& Y);
void spmv_serial(const SparseOperator& A, const Field& X, Field& Y);

/// Y = X + s * (A X) on rows where A is non-empty, Y = X elsewhere.
void euler_update(const SparseOperator& A, const Field& X, double s, Field& Y);
void euler_update_serial(const SparseOperator& A, const Field& X, double s, Field& Y);

inline constexpr std::size_t kNoFailure = std::numeric_limits<std::size_t>::max();

struct ProjectionOutcome {
  std::size_t failed_row = kNoFailure;  // lowest failing row
  bool nonfinite = false;               // failure cause: NaN/Inf input
};

/// Y.row(r) = cp_N(X.row(r)). Stops reporting at the lowest row whose
/// projection is non-unique or whose input is not finite.
ProjectionOutcome project_rows(const Surface& target, const Field& X, Field& Y);
ProjectionOutcome project_rows_serial(const Surface& target, const Field& X, Field& Y);

/// Throws SolverError (DegenerateQuery / Divergence) for a failed projection.
void raise_projection_failure(const ProjectionOutcome& out, const char* where);

}  // namespace cpmap
