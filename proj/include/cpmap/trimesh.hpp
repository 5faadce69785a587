#pragma once

#include "cpmap/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

namespace cpmap {

using Vec3 = Eigen::Vector3d;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  // Per-face edge vectors (b - a, c - a) and unit normals.
  std::vector<Vec3> edge0, edge1, normals;

  /// Validates indices and face areas, fills the per-face caches.
  static TriMesh build(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

  std::size_t boundary_edge_count() const;
  std::size_t edge_count() const;
  bool closed() const { return boundary_edge_count() == 0; }
  Box bounds() const;
};

inline constexpr double kMinFaceArea = 1e-14;

TriMesh read_off(std::istream& in);
TriMesh read_obj(std::istream& in);
/// Dispatches on the file extension (.off / .obj).
TriMesh load_mesh(const std::filesystem::path& path);
void write_off(const TriMesh& mesh, const std::filesystem::path& path);

/// Subdivided icosahedron projected to the sphere of the given radius.
TriMesh make_icosphere(int subdivisions, double radius = 1.0);
/// Open ~2k-face blob with five holes, used in place of the Stanford bunny.
TriMesh make_standin_bunny();

/// Voronoi region of the triangle that contains the closest point.
enum class TriRegion : std::uint8_t { Face, EdgeAB, EdgeBC, EdgeCA, VertexA, VertexB, VertexC };

struct TriangleCp {
  Vec3 cp;
  Vec3 bary;  // weights of (a, b, c)
  double dist2 = 0;
  TriRegion region = TriRegion::Face;
};

/// Exact closest point on triangle abc by region classification.
TriangleCp closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct MeshCp {
  Vec3 cp;
  Vec3 bary;
  double dist = 0;
  int face = -1;
};

/// Uniform cells holding the faces whose bounding boxes overlap them.
class FaceGrid {
 public:
  FaceGrid() = default;
  FaceGrid(const TriMesh& mesh, double cell_size = 0);

  double cell_size() const { return h_; }
  /// Global minimizer by expanding-ring search; ties go to the lowest face.
  MeshCp closest(const TriMesh& mesh, const Vec3& q) const;
  /// Minimizer over the faces touching the cells that overlap box [lo, hi].
  /// Returns face = -1 when no face is found.
  MeshCp closest_in_box(const TriMesh& mesh, const Vec3& q, const Vec3& lo, const Vec3& hi) const;

 private:
  std::array<int, 3> cell_of(const Vec3& x) const;
  void scan_cell(const TriMesh& mesh, const Vec3& q, int i, int j, int k, MeshCp& best,
                 std::vector<std::uint32_t>& seen, std::uint32_t stamp) const;

  Vec3 origin_ = Vec3::Zero();
  double h_ = 1;
  std::array<int, 3> n_{0, 0, 0};
  std::vector<std::uint32_t> start_;  // CSR offsets per cell
  std::vector<int> items_;
};

MeshCp closest_point_exact(const TriMesh& mesh, const FaceGrid& grid, const Vec3& q);
/// Brute force over all faces; the test oracle for the accelerated paths.
MeshCp closest_point_brute(const TriMesh& mesh, const Vec3& q);

/// Dense grid of precomputed closest points within `radius` of the mesh.
class CpGrid {
 public:
  static constexpr std::size_t kDefaultMaxCells = 100'000'000;

  CpGrid(const TriMesh& mesh, const FaceGrid& faces, double spacing, double radius,
         std::size_t max_cells = kDefaultMaxCells);

  double spacing() const { return h_; }
  double radius() const { return radius_; }
  const Vec3& origin() const { return origin_; }
  std::array<int, 3> dims() const { return n_; }
  std::size_t stored_count() const { return stored_; }

  Vec3 node(int i, int j, int k) const { return origin_ + h_ * Vec3(i, j, k); }
  /// Stored entry at a node, or nullptr when absent.
  const MeshCp* at(int i, int j, int k) const;

 private:
  Vec3 origin_;
  double h_, radius_;
  std::array<int, 3> n_;
  std::vector<std::int32_t> slot_;  // -1 when absent
  std::vector<MeshCp> entries_;
  std::size_t stored_ = 0;
};

struct LocalSearchStats {
  std::atomic<std::uint64_t> queries{0};
  std::atomic<std::uint64_t> widened{0};     // bounding sphere failed to certify
  std::atomic<std::uint64_t> fallbacks{0};   // OutOfCoverage -> exact search
};

/// Local search seeded by the 8 grid corners around q. Throws OutOfCoverage
/// when any corner is absent from the grid.
MeshCp closest_point_local(const TriMesh& mesh, const FaceGrid& faces, const CpGrid& grid,
                           const Vec3& q, LocalSearchStats* stats = nullptr);

/// Surface adapter over a triangle mesh. With a CpGrid, queries use the local
/// search and fall back to the exact search outside coverage.
class MeshSurface final : public Surface {
 public:
  explicit MeshSurface(TriMesh mesh);
  /// Enables the precomputed grid used by the local search.
  void precompute(double spacing, double radius,
                  std::size_t max_cells = CpGrid::kDefaultMaxCells);

  int dim() const override { return 3; }
  bool closed() const override { return closed_; }
  std::string name() const override { return "mesh"; }
  Box bounds() const override { return mesh_.bounds(); }
  double reach() const override { return 0.0; }
  CpResult closest_point_any(const Point& x) const override;

  MeshCp query(const Vec3& q) const;
  const TriMesh& mesh() const { return mesh_; }
  const FaceGrid& face_grid() const { return faces_; }
  const CpGrid* cp_grid() const { return grid_.get(); }
  const LocalSearchStats& stats() const { return stats_; }

 private:
  TriMesh mesh_;
  FaceGrid faces_;
  std::unique_ptr<CpGrid> grid_;
  bool closed_;
  mutable LocalSearchStats stats_;
};

}  // namespace cpmap
