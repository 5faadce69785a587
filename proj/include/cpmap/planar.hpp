#pragma once

#include "cpmap/band.hpp"
#include "cpmap/kernels.hpp"

namespace cpmap {

/// Boundary treatment for a planar rectangle grid.
enum class PlanarBoundary {
  Neumann,    // ghost mirroring, u_{-1} = u_{1}
  Dirichlet,  // boundary rows held fixed
};

struct PlanarShape {
  int nx = 0, ny = 0;
  double dx = 0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  int row(int i, int j) const { return i * ny + j; }
  bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == nx - 1 || j == ny - 1; }
};

/// Shape of a planar band (rows ordered by (i, j)).
PlanarShape planar_shape(const Band& band);

/// Five-point Laplacian. Neumann mirrors across the edge; Dirichlet leaves
/// boundary rows empty so they are never evolved.
SparseOperator assemble_planar_laplacian(const PlanarShape& g, PlanarBoundary bc);

/// Forward differences (zero on the last line) and backward differences
/// that treat the flux entering from outside the rectangle as zero, i.e.
/// J n = 0 on the boundary.
std::vector<GradientPair> assemble_planar_gradients(const PlanarShape& g);

/// Dirichlet energy with trapezoid edge weights. With mirror-Neumann
/// boundaries this is the energy whose (mass-weighted) gradient flow the
/// Laplacian above discretizes.
double planar_energy(const PlanarShape& g, const Field& u);

/// max over interior nodes of |lap0 u + |J_u|_F^2 u|, J_u by centred differences.
double liquid_crystal_residual(const PlanarShape& g, const Field& u);

}  // namespace cpmap
