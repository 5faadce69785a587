#pragma once

#include "cpmap/band.hpp"
#include "cpmap/geometry.hpp"
#include "cpmap/kernels.hpp"
#include "cpmap/planar.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

namespace cpmap {

struct FlowSpec {
  enum class Kind { Harmonic, PHarmonic, AnisotropicPlane };
  Kind kind = Kind::Harmonic;
  double p = 2.0;
  double delta = 1e-16;
  double dt_factor = 0.1;  // dt = dt_factor * dx^2

  /// Throws ValidationError for out-of-range parameters.
  void validate() const;
};

/// Values of u: M -> N per grid node.
struct MapField {
  Field values;
  SurfacePtr target;
  double time = 0;
};

/// Grid operators shared by the CPM solver and the diagnostics.
struct Discretization {
  std::shared_ptr<const Band> band;
  SurfacePtr source;
  bool extend = true;  // false on planar grids
  SparseOperator E;    // closest point extension
  SparseOperator L;    // Laplacian; empty rows are never evolved
  std::vector<GradientPair> grad;
  PlanarShape plane;   // valid when !extend

  /// CPM on a narrow band: extension, core-row Laplacian, one-sided
  /// gradients with fallback at the band edge.
  static Discretization on_band(std::shared_ptr<const Band> band, SurfacePtr source);
  /// Planar rectangle grid (no extension).
  static Discretization on_plane(std::shared_ptr<const Band> band, PlanarBoundary bc);

  std::size_t size() const { return band->size(); }
  bool active(std::size_t row) const { return L.row_ptr[row] != L.row_ptr[row + 1]; }
};

// Right-hand sides. All expect an already extended field v and return 0 on
// rows that are not evolved.

/// Componentwise lap0 v.
Field rhs_harmonic(const Discretization& d, const Field& v);
/// p^{1-2/p} div^-((e_p)^{1-2/p} grad^+ v) with e_p = (1/p)(|grad^+ v|_F + delta)^p
/// for p < 2 and e_p = (1/p)|grad^+ v|_F^p otherwise.
Field rhs_p_harmonic(const Discretization& d, const Field& v, double p, double delta);
/// div^-(J / (|J|_F + delta)), J by forward differences.
Field rhs_anisotropic_plane(const Discretization& d, const Field& v, double delta);

/// Algorithm 1: u <- cp_N(E u + dt F(E u)).
class CpmSolver {
 public:
  CpmSolver(std::shared_ptr<const Discretization> d, SurfacePtr target, FlowSpec spec,
            bool serial = false);

  double dt() const { return dt_; }
  void set_dt(double dt) { dt_ = dt; }
  const Discretization& disc() const { return *d_; }
  const FlowSpec& spec() const { return spec_; }
  const Surface& target() const { return *target_; }

  Field extend(const Field& u) const;
  Field rhs(const Field& v) const;
  /// w = v + dt F(v) on evolved rows.
  Field evolve(const Field& v) const;
  /// One full step; throws SolverError naming the failing node.
  void step(MapField& u) const;

 private:
  std::shared_ptr<const Discretization> d_;
  SurfacePtr target_;
  FlowSpec spec_;
  bool serial_;
  double dt_;
};

struct LsmConfig {
  double band_factor = 3.0;
  int reextension_interval = 1;
  void validate() const;
};

/// Level-set baseline: u <- cp_N(v + dt P(v) div^-(Q grad^+ v)), v = E u,
/// Q = I - n n^T with n the unit normal of M at cp_M(x), P = I - nu nu^T with
/// nu the unit normal of N at cp_N(v).
class LsmSolver {
 public:
  LsmSolver(std::shared_ptr<const Band> band, SurfacePtr source, SurfacePtr target, FlowSpec spec,
            LsmConfig cfg = {});

  double dt() const { return dt_; }
  void set_dt(double dt) { dt_ = dt; }
  const Band& band() const { return *band_; }
  const SparseOperator& extension() const { return E_; }
  void step(MapField& u) const;
  /// P(v) div^-(Q grad^+ v) for an extended field.
  Field rhs(const Field& v) const;

 private:
  std::shared_ptr<const Band> band_;
  SurfacePtr target_;
  FlowSpec spec_;
  LsmConfig cfg_;
  SparseOperator E_;
  std::vector<GradientPair> grad_;
  std::vector<Eigen::Vector3d> normal_;
  double dt_;
  mutable long steps_taken_ = 0;
};

/// Unit normal of M at a band node: (x - cp)/dist, or the surface normal
/// when the node is on the surface; zero for open surfaces on the surface.
Eigen::Vector3d band_normal(const Band& band, const Surface& source, std::size_t row);

/// Dirichlet energy of an extended field. Band: (1/2) sum over near-surface
/// nodes of |(grad^+ v) Pi|_F^2 dx^m / (2 lambda_c); planar: trapezoid sum.
double dirichlet_energy(const Discretization& d, const Field& v);

/// Jacobian of cp_N at u: analytic for hyperspheres, central differences
/// (step 1e-6) otherwise.
SmallMatrix cp_jacobian(const Surface& target, const Point& u);

struct ProbeResult {
  std::array<double, 3> dt{};
  std::array<double, 3> difference{};  // max splitting difference per dt
  double order = 0;                    // min of the two observed orders
};

/// Splitting-error probe: compares cp_N(v + dt F) with the unsplit
/// cp_N(v) + dt J_cpN(v) F, v = E u0, over dt in {h, h/2, h/4}.
ProbeResult consistency_probe(const CpmSolver& solver, const Field& u0, double h);

struct RunOptions {
  long steps = 0;
  /// Stop when |u^{k+1} - u^k|_inf / dt < steady_tol (after at least one step).
  bool steady_stop = false;
  double steady_tol = 1e-6;
  /// Per-step CSV (step,time,energy,max_displacement) when set.
  std::ostream* log = nullptr;
  long log_every = 1;
  /// Re-evaluate the step composition on 32 random nodes every k steps.
  long verify_every = 0;
  /// Track the max distance of projected rows to N.
  bool check_manifold = false;
  std::function<void(long step, const MapField& u)> observer;
};

struct RunSummary {
  long steps = 0;
  bool steady = false;
  double max_manifold_distance = 0;
  double max_verify_error = 0;
  std::vector<double> energy;  // per logged step when logging
};

RunSummary run_cpm(const CpmSolver& solver, MapField& u, const RunOptions& opt);

/// Number of equal steps of size <= dt_max reaching t_final.
long steps_for(double t_final, double dt_max);

}  // namespace cpmap
