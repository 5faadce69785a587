#pragma once

#include "cpmap/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <unordered_map>
#include <vector>

namespace cpmap {

using Index3 = std::array<int, 3>;

/// Band radius for interpolation degree p in R^m, in units of dx.
double band_radius_factor(int m, int p);

struct BandOptions {
  int degree = 3;              // barycentric Lagrange interpolation degree
  double radius_factor = 1.0;  // multiple of lambda_c (3 for the level-set baseline)
  bool laplacian_ring = true;  // add the 2m+1 stencil neighbours of core nodes
};

/// Narrow band of a uniform grid around a surface. Grid nodes are
/// origin + dx * index; only the first `dim` index entries are used.
struct Band {
  int dim = 3;
  double dx = 0;
  double lambda_c = 0;  // stencil-support radius for the degree
  double radius = 0;    // radius_factor * lambda_c
  int degree = 3;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();

  std::vector<Index3> index;
  std::vector<Eigen::Vector3d> x;   // node coordinates
  std::vector<Eigen::Vector3d> cp;  // closest points on the surface
  std::vector<double> dist;
  std::vector<std::uint8_t> core;  // dist <= radius; others are closure nodes
  std::size_t degenerate_count = 0;
  bool planar = false;  // grid of a planar rectangle, no extension

  std::size_t size() const { return index.size(); }
  /// Row of a node, or -1 when absent.
  int find(const Index3& idx) const;
  int find(int i, int j, int k) const { return find(Index3{i, j, k}); }
  /// Rows of core nodes within lambda_c of the surface (evaluation set).
  std::vector<int> near_surface() const;

  void rebuild_lookup();

 private:
  std::unordered_map<std::uint64_t, int> lookup_;
};

std::uint64_t pack_index(const Index3& idx);

/// Nodes within the band radius of the surface plus stencil closure.
/// A 2-D PlaneRect source yields the rectangle's own grid (planar case).
Band build_band(const Surface& surface, double dx, const BandOptions& opt = {});

enum class OperatorKind { Laplacian, GradForward, GradBackward, Extension };

/// Compressed sparse rows. Each row is summed left to right in stored order.
struct SparseOperator {
  OperatorKind kind = OperatorKind::Laplacian;
  int axis = -1;
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint32_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }
  void push(std::uint32_t c, double w) {
    col.push_back(c);
    val.push_back(w);
  }
  void end_row() {
    row_ptr.push_back(static_cast<std::uint32_t>(col.size()));
    ++rows;
  }
};

/// 1-D barycentric Lagrange weights on nodes 0..p evaluated at t.
void lagrange_weights(int p, double t, double* w);

/// Closest-point extension: row j interpolates at cp(x_j) with the
/// tensor-product degree-p stencil.
SparseOperator assemble_extension(const Band& band);
/// Centred (2m+1)-point Laplacian. With `core_only`, closure rows are empty.
SparseOperator assemble_laplacian(const Band& band, bool core_only = true);

struct GradientPair {
  SparseOperator forward, backward;
};
/// One-sided first differences per axis. With `fallback`, a missing
/// neighbour switches to the opposite one-sided difference (zero row if
/// both are missing); otherwise it throws MissingStencilNode.
std::vector<GradientPair> assemble_gradients(const Band& band, bool fallback);

/// Diagnostic CSV: id, multi-index, coordinates, cp, dist, core flag.
void dump_band_csv(const Band& band, const std::filesystem::path& path);

}  // namespace cpmap
