#pragma once

#include "cpmap/band.hpp"
#include "cpmap/config.hpp"
#include "cpmap/io.hpp"
#include "cpmap/solver.hpp"
#include "cpmap/trimesh.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace cpmap {

struct NoiseSpec {
  std::array<double, 3> alpha{0.05, 0.05, 0.05};
  std::uint64_t seed = 1;
};

/// Normal deviates for one grid node of one realization. The stream is keyed
/// by (seed, realization, grid index), so any grid that shares node indices
/// sees the same noise there.
std::array<double, 3> node_noise(const NoiseSpec& noise, std::uint64_t realization, const Index3& idx);

/// Named analytic surfaces: sphere, ellipsoid, torus, cylinder, cap.
SurfacePtr make_surface(const std::string& name, const Config& cfg);

/// Area of an analytic surface or mesh (numerical for the ellipsoid).
double surface_area(const Surface& s);
/// Node count of a band without building it (planar grids are exact).
std::size_t estimate_band_nodes(const Surface& s, double dx, const BandOptions& opt = {});

/// Smoothly perturbed identity, cp_M(c + eps (sin 2c_y, sin 2c_z, sin 2c_x)) at
/// c = cp_M(x); the initial map of the splitting probe.
Field perturbed_identity(const Band& band, const Surface& surface, double eps);

/// Inverse stereographic projection of the plane onto S^2 (a conformal,
/// hence harmonic, chart).
Eigen::Vector3d inverse_stereographic(double x, double y);

// ---------------------------------------------------------------------------

struct IdentityStudyParams {
  std::string surface = "sphere";
  std::vector<double> dx{0.2, 0.1, 0.05};
  bool run_cpm = true;
  bool run_lsm = false;
  int realizations = 16;
  double t_final = 0.01;
  double dt_factor = 0.1;
  int degree = 3;
  NoiseSpec noise;
  LsmConfig lsm;
  Config shape;  // surface parameters (ellipsoid.axes, torus.R, torus.r)
  std::ostream* progress = nullptr;

  static IdentityStudyParams from_config(const Config& cfg);
};

/// Error = mean over realizations of max_j |(E u)(x_j) - cp_M(x_j)| over
/// band nodes within lambda_c of M. Rows per dx: CPM then LSM.
ExperimentReport identity_map_study(const IdentityStudyParams& p);

struct PlaneSphereParams {
  std::vector<double> dx{0.1, 0.05, 0.025};
  double dx_ref = 0.00625;
  int realizations = 16;
  double t_final = 0.01;
  double dt_factor = 0.1;
  NoiseSpec noise;
  std::ostream* progress = nullptr;

  static PlaneSphereParams from_config(const Config& cfg);
};

/// Plane [-1,1]^2 -> S^2 with Neumann boundaries; error against a reference
/// solution on the shared nodes. Noise is drawn on the reference grid and
/// restricted, so every resolution sees the same realization.
ExperimentReport plane_to_sphere_study(const PlaneSphereParams& p);

/// Planar solve used by the study above (exposed for tests).
Field solve_plane_sphere(double dx, double dx_ref, double t_final, double dt_factor, const NoiseSpec& noise,
                         std::uint64_t realization);

struct TextureParams {
  std::string source = "plane";  // plane | cylinder
  std::string target = "sphere"; // sphere | mesh | cap
  double dx = 0.05;
  long steps = 300;
  NoiseSpec noise;
  std::filesystem::path image;  // PPM; a generated checker texture when empty
  std::filesystem::path mesh;
  double mesh_scale = 1.0;
  Eigen::Vector3d mesh_offset = Eigen::Vector3d::Zero();
  double plane_scale = 0.8;  // fraction of the mesh extent covered by the posed plane
  double grid_spacing = 0;   // cp grid for mesh targets; 0 = dx / 2
  double grid_radius = 0;    // 0 = 8 * spacing
  long stats_every = 10;
  std::filesystem::path out;  // PLY/CSV outputs when non-empty
  std::ostream* log = nullptr;  // per-step CSV

  static TextureParams from_config(const Config& cfg);
};

struct TextureResult {
  std::vector<long> stat_steps;
  std::vector<double> mean_displacement;       // mean distance (angle on S^2) from w
  std::vector<double> reference_displacement;  // same, from the noise-free evolved map
  double max_manifold_distance = 0;
  double max_cap_violation = 0;  // cylinder -> cap: polar angle outside the band
  std::size_t nodes = 0;
  std::uint64_t mesh_queries = 0, mesh_widened = 0, mesh_fallbacks = 0;
  Field w, initial, final;
  std::vector<std::filesystem::path> outputs;
};

TextureResult texture_denoise(const TextureParams& p);

/// Small RGB checker with coloured stripes, used when no image is given.
Image make_test_texture(int width, int height);

struct RandomMapParams {
  double dx = 0.05;
  long max_steps = 4000;
  long check_every = 50;
  double stop_ratio = 0.05;  // stop once diameter < ratio * initial (0: never)
  int seed_vertices = 16;
  int neighbours = 240;
  std::uint64_t seed = 1;
  double torus_R = 1.25, torus_r = 0.75;
  std::filesystem::path mesh;
  double mesh_scale = 1.0;
  Eigen::Vector3d mesh_offset = Eigen::Vector3d::Zero();
  double grid_spacing = 0;  // 0 = dx / 2
  double grid_radius = 0;   // 0 = 8 * spacing
  std::vector<long> snapshots;
  std::filesystem::path out;
  std::ostream* progress = nullptr;

  static RandomMapParams from_config(const Config& cfg);
};

struct RandomMapResult {
  std::vector<int> seed_vertex;
  std::vector<int> pool;  // vertex ids of the union of neighbour sets
  bool initial_in_pool = false;
  std::vector<std::pair<long, double>> diameter;  // (step, diameter)
  double initial_diameter = 0, final_diameter = 0;
  long steps = 0;
  std::uint64_t mesh_queries = 0, mesh_widened = 0, mesh_fallbacks = 0;
  std::vector<std::filesystem::path> outputs;
};

RandomMapResult random_map_study(const RandomMapParams& p);

/// Exact diameter (max pairwise distance) of a point set.
double point_set_diameter(const std::vector<Eigen::Vector3d>& pts);

/// Mesh transformed by x -> scale * x + offset.
TriMesh transform_mesh(const TriMesh& m, double scale, const Eigen::Vector3d& offset);

// ---------------------------------------------------------------------------
// Chromaticity diffusion

struct ChromaParams {
  std::string mode = "isotropic";  // isotropic | anisotropic
  long steps = 30;
  double noise_fraction = 0.05;
  std::uint64_t seed = 1;
  double dt_factor = 0;  // 0: 0.1 isotropic, 0.5 anisotropic
  double delta = 1e-16;
  int edge_halfwidth = 2;
  int size = 256;  // synthetic image size
  double pixel_size = 1.0;  // grid spacing dx of one pixel
  std::filesystem::path image;

  static ChromaParams from_config(const Config& cfg);
};

struct ChromaMetrics {
  double mean = 0, edge = 0, interior = 0;  // mean angular error (radians)
};

/// Salt-and-pepper chromaticity noise, chroma field, intensity, and masks.
struct ChromaProblem {
  Image clean;
  PlanarShape shape;
  Field clean_chroma, noisy_chroma;
  std::vector<double> intensity;
  std::vector<std::uint8_t> valid;  // nonzero intensity
  std::vector<std::uint8_t> edge;   // within edge_halfwidth of a colour boundary
};

/// Vertical red, green and blue thirds at intensity 200.
Image make_three_band_image(int size);
ChromaProblem make_chroma_problem(const Image& clean, const ChromaParams& p);
ChromaMetrics chroma_error(const ChromaProblem& prob, const Field& u);
/// Runs the chosen flow for `steps` and returns the chroma field; the
/// observer sees every step; `log` receives the per-step CSV.
Field chroma_flow(const ChromaProblem& prob, const std::string& mode, long steps, double dt_factor, double delta,
                  const std::function<void(long, const Field&)>& observer = {}, std::ostream* log = nullptr);
Image compose_image(const ChromaProblem& prob, const Field& u);

struct ChromaComparison {
  ChromaMetrics noisy, isotropic, anisotropic;
  long matched_isotropic_steps = 0;
  ChromaMetrics isotropic_matched;
};

/// Isotropic for iso_steps, anisotropic for aniso_steps, and the isotropic
/// step count whose interior error best matches the anisotropic one.
ChromaComparison chroma_compare(const ChromaProblem& prob, long iso_steps, long aniso_steps, long max_scan,
                                double delta = 1e-16);

}  // namespace cpmap
