#include "cpmap/planar.hpp"

#include "cpmap/error.hpp"

#include <algorithm>
#include <cmath>

namespace cpmap {

PlanarShape planar_shape(const Band& band) {
  if (!band.planar) throw Unsupported("planar operators need a planar grid");
  PlanarShape g;
  g.dx = band.dx;
  g.origin = band.origin.head<2>();
  g.nx = band.index.back()[0] + 1;
  g.ny = band.index.back()[1] + 1;
  if (static_cast<std::size_t>(g.nx) * g.ny != band.size()) throw ValidationError("grid", "planar grid is not rectangular");
  return g;
}

SparseOperator assemble_planar_laplacian(const PlanarShape& g, PlanarBoundary bc) {
  SparseOperator op;
  op.kind = OperatorKind::Laplacian;
  op.cols = static_cast<std::size_t>(g.nx) * g.ny;
  const double inv = 1.0 / (g.dx * g.dx);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      if (bc == PlanarBoundary::Dirichlet && g.on_boundary(i, j)) {
        op.end_row();
        continue;
      }
      // Neighbour weights, mirrored at the edges (a 1-wide axis has none).
      double wl = 0, wr = 0, wd = 0, wu = 0;
      if (g.nx > 1) {
        wl = i > 0 ? inv : 0;
        wr = i < g.nx - 1 ? inv : 0;
        if (i == 0) wr = 2 * inv;
        if (i == g.nx - 1) wl = 2 * inv;
      }
      if (g.ny > 1) {
        wd = j > 0 ? inv : 0;
        wu = j < g.ny - 1 ? inv : 0;
        if (j == 0) wu = 2 * inv;
        if (j == g.ny - 1) wd = 2 * inv;
      }
      const double centre = -(wl + wr + wd + wu);
      if (wl != 0) op.push(g.row(i - 1, j), wl);
      if (wd != 0) op.push(g.row(i, j - 1), wd);
      op.push(g.row(i, j), centre);
      if (wu != 0) op.push(g.row(i, j + 1), wu);
      if (wr != 0) op.push(g.row(i + 1, j), wr);
      op.end_row();
    }
  return op;
}

std::vector<GradientPair> assemble_planar_gradients(const PlanarShape& g) {
  std::vector<GradientPair> out(2);
  const double inv = 1.0 / g.dx;
  const std::size_t n = static_cast<std::size_t>(g.nx) * g.ny;
  for (int a = 0; a < 2; ++a) {
    auto& fw = out[a].forward;
    auto& bw = out[a].backward;
    fw.kind = OperatorKind::GradForward;
    bw.kind = OperatorKind::GradBackward;
    fw.axis = bw.axis = a;
    fw.cols = bw.cols = n;
    const int len = a == 0 ? g.nx : g.ny;
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.ny; ++j) {
        const int t = a == 0 ? i : j;
        const auto self = static_cast<std::uint32_t>(g.row(i, j));
        const auto next = static_cast<std::uint32_t>(a == 0 ? g.row(i + 1, j) : g.row(i, j + 1));
        const auto prev = static_cast<std::uint32_t>(a == 0 ? g.row(i - 1, j) : g.row(i, j - 1));
        if (t < len - 1) {
          fw.push(self, -inv);
          fw.push(next, inv);
        }
        fw.end_row();
        if (t > 0) bw.push(prev, -inv);
        if (len > 1) bw.push(self, inv);
        bw.end_row();
      }
  }
  return out;
}

double planar_energy(const PlanarShape& g, const Field& u) {
  double e = 0;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      if (i + 1 < g.nx) {
        const double w = (j == 0 || j == g.ny - 1) && g.ny > 1 ? 0.5 : 1.0;
        e += w * (u.row(g.row(i + 1, j)) - u.row(g.row(i, j))).squaredNorm();
      }
      if (j + 1 < g.ny) {
        const double w = (i == 0 || i == g.nx - 1) && g.nx > 1 ? 0.5 : 1.0;
        e += w * (u.row(g.row(i, j + 1)) - u.row(g.row(i, j))).squaredNorm();
      }
    }
  return 0.5 * e;
}

double liquid_crystal_residual(const PlanarShape& g, const Field& u) {
  double worst = 0;
  const double inv2 = 1.0 / (g.dx * g.dx), inv = 0.5 / g.dx;
  for (int i = 1; i + 1 < g.nx; ++i)
    for (int j = 1; j + 1 < g.ny; ++j) {
      const auto c = u.row(g.row(i, j));
      const auto l = u.row(g.row(i - 1, j)), r = u.row(g.row(i + 1, j));
      const auto d = u.row(g.row(i, j - 1)), t = u.row(g.row(i, j + 1));
      const Eigen::RowVectorXd lap = (l + r + d + t - 4 * c) * inv2;
      const double j2 = ((r - l) * inv).squaredNorm() + ((t - d) * inv).squaredNorm();
      worst = std::max(worst, (lap + j2 * c).norm());
    }
  return worst;
}

}  // namespace cpmap
