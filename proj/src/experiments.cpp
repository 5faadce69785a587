#include "cpmap/experiments.hpp"

#include "cpmap/error.hpp"
#include "cpmap/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace cpmap {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Point to_point(const Eigen::Vector3d& v) {
  Point p(3);
  p << v[0], v[1], v[2];
  return p;
}

Eigen::Vector3d to_vec(const Point& p) { return {p[0], p[1], p[2]}; }

constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;

NoiseSpec noise_from(const Config& cfg, double default_alpha) {
  NoiseSpec n;
  const auto a = cfg.reals("alpha", {default_alpha});
  if (a.size() == 1)
    n.alpha = {a[0], a[0], a[0]};
  else if (a.size() == 3)
    n.alpha = {a[0], a[1], a[2]};
  else
    throw ValidationError("alpha", "alpha takes one or three values");
  for (double v : n.alpha)
    if (!(v >= 0)) throw ValidationError("alpha", "alpha must be >= 0");
  n.seed = cfg.u64("seed", 1);
  return n;
}

std::vector<double> dx_list(const Config& cfg) {
  auto dx = cfg.reals("dx");
  if (dx.empty()) throw ValidationError("dx", "dx list is empty");
  for (double v : dx)
    if (!(v > 0)) throw ValidationError("dx", "dx must be positive");
  return dx;
}

int positive_int(const Config& cfg, const std::string& key, long fallback) {
  const long v = cfg.integer(key, fallback);
  if (v < 1 || v > std::numeric_limits<int>::max()) throw ValidationError(key, key + " must be >= 1");
  return static_cast<int>(v);
}

Eigen::Vector3d vec3_from(const Config& cfg, const std::string& key, const Eigen::Vector3d& fallback) {
  if (!cfg.has(key)) return fallback;
  const auto v = cfg.reals(key);
  if (v.size() != 3) throw ValidationError(key, key + " takes three values");
  return {v[0], v[1], v[2]};
}

/// u0 = cp_N(w + r); rows without noise keep w unchanged.
Field noisy_map(const Surface& target, const std::vector<Eigen::Vector3d>& w, const NoiseSpec& noise,
                std::uint64_t realization, const std::function<Index3(std::size_t)>& key) {
  Field u(static_cast<Eigen::Index>(w.size()), 3);
  const auto n = static_cast<std::ptrdiff_t>(w.size());
  std::ptrdiff_t failed = -1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto z = node_noise(noise, realization, key(static_cast<std::size_t>(r)));
    Eigen::Vector3d q = w[r];
    if (z[0] != 0 || z[1] != 0 || z[2] != 0) {
      const auto res = target.closest_point_any(to_point(w[r] + Eigen::Vector3d(z[0], z[1], z[2])));
      if (!res.unique) {
#pragma omp critical
        failed = r;
      }
      q = to_vec(res.cp);
    }
    u.row(r) = q.transpose();
  }
  if (failed >= 0) throw SolverError("DegenerateQuery", failed, "initial projection has no unique closest point");
  return u;
}

/// max_j |(E u)_j - target_j| over the given rows.
double max_extended_error(const SparseOperator& E, const Field& u, const std::vector<int>& rows,
                          const std::vector<Eigen::Vector3d>& target) {
  double worst = 0;
  for (int r : rows) {
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    for (auto e = E.row_ptr[r]; e < E.row_ptr[r + 1]; ++e) v += E.val[e] * u.row(E.col[e]).transpose();
    worst = std::max(worst, (v - target[r]).norm());
  }
  return worst;
}

std::array<std::uint8_t, 3> to_rgb(const std::array<double, 3>& c) {
  std::array<std::uint8_t, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(c[i]), 0L, 255L));
  return out;
}

}  // namespace

std::array<double, 3> node_noise(const NoiseSpec& noise, std::uint64_t realization, const Index3& idx) {
  if (noise.alpha[0] == 0 && noise.alpha[1] == 0 && noise.alpha[2] == 0) return {0, 0, 0};
  RngStream rng(noise.seed, mix_stream_id(kNoiseTag, realization, pack_index(idx)));
  std::array<double, 3> z{};
  for (int a = 0; a < 3; ++a) z[a] = noise.alpha[a] * rng.normal();
  return z;
}

SurfacePtr make_surface(const std::string& name, const Config& cfg) {
  if (name == "sphere") return std::make_shared<Hypersphere>(3);
  if (name == "ellipsoid") {
    const auto ax = cfg.reals("ellipsoid.axes", {1.0, 0.8, 0.6});
    if (ax.size() != 3) throw ValidationError("ellipsoid.axes", "ellipsoid.axes takes three values");
    return std::make_shared<Ellipsoid>(ax[0], ax[1], ax[2]);
  }
  if (name == "torus") return std::make_shared<Torus>(cfg.real("torus.R", 1.25), cfg.real("torus.r", 0.75));
  if (name == "cylinder") return std::make_shared<CylinderSegment>(1.0, -2.0, 2.0);
  if (name == "cap") return std::make_shared<SphericalCap>(std::acos(2 / std::sqrt(5.0)), std::acos(-2 / std::sqrt(5.0)));
  throw ValidationError("surface", "unknown surface '" + name + "'");
}

double surface_area(const Surface& s) {
  constexpr double pi = std::numbers::pi;
  if (dynamic_cast<const Hypersphere*>(&s) && s.dim() == 3) return 4 * pi;
  if (auto* t = dynamic_cast<const Torus*>(&s)) {
    const Box b = t->bounds();
    const double r = b.hi[2], R = b.hi[0] - r;
    return 4 * pi * pi * R * r;
  }
  if (auto* c = dynamic_cast<const CylinderSegment*>(&s)) {
    const Box b = c->bounds();
    return 2 * pi * b.hi[0] * (b.hi[2] - b.lo[2]);
  }
  if (auto* cap = dynamic_cast<const SphericalCap*>(&s))
    return 2 * pi * (std::cos(cap->theta_min()) - std::cos(cap->theta_max()));
  if (auto* e = dynamic_cast<const Ellipsoid*>(&s)) {
    // Midpoint rule in (theta, phi) on the parameterization.
    const Box b = e->bounds();
    const double a = b.hi[0], bb = b.hi[1], c = b.hi[2];
    const int n = 200;
    double area = 0;
    for (int i = 0; i < n; ++i) {
      const double th = pi * (i + 0.5) / n;
      for (int j = 0; j < 2 * n; ++j) {
        const double ph = pi * (j + 0.5) / n;
        const Eigen::Vector3d dt(a * std::cos(th) * std::cos(ph), bb * std::cos(th) * std::sin(ph), -c * std::sin(th));
        const Eigen::Vector3d dp(-a * std::sin(th) * std::sin(ph), bb * std::sin(th) * std::cos(ph), 0);
        area += dt.cross(dp).norm();
      }
    }
    return area * (pi / n) * (pi / n);
  }
  if (auto* m = dynamic_cast<const MeshSurface*>(&s)) {
    double area = 0;
    const auto& mesh = m->mesh();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) area += 0.5 * mesh.edge0[f].cross(mesh.edge1[f]).norm();
    return area;
  }
  throw Unsupported("no area formula for surface '" + s.name() + "'");
}

std::size_t estimate_band_nodes(const Surface& s, double dx, const BandOptions& opt) {
  if (auto* plane = dynamic_cast<const PlaneRect*>(&s); plane && s.dim() == 2) {
    const Box b = plane->bounds();
    return static_cast<std::size_t>(std::lround((b.hi[0] - b.lo[0]) / dx) + 1) *
           static_cast<std::size_t>(std::lround((b.hi[1] - b.lo[1]) / dx) + 1);
  }
  const double radius = opt.radius_factor * band_radius_factor(s.dim(), opt.degree) * dx;
  return static_cast<std::size_t>(surface_area(s) * 2 * radius / std::pow(dx, 3));
}

Field perturbed_identity(const Band& band, const Surface& surface, double eps) {
  Field u(static_cast<Eigen::Index>(band.size()), 3);
  for (std::size_t r = 0; r < band.size(); ++r) {
    const Eigen::Vector3d c = band.cp[r];
    const Eigen::Vector3d q = c + eps * Eigen::Vector3d(std::sin(2 * c[1]), std::sin(2 * c[2]), std::sin(2 * c[0]));
    const Point cp = surface.closest_point(to_point(q)).cp;
    u.row(r) << cp[0], cp[1], cp[2];
  }
  return u;
}

Eigen::Vector3d inverse_stereographic(double x, double y) {
  const double r2 = x * x + y * y;
  return Eigen::Vector3d(2 * x, 2 * y, 1 - r2) / (1 + r2);
}

TriMesh transform_mesh(const TriMesh& m, double scale, const Eigen::Vector3d& offset) {
  if (!(scale > 0)) throw ValidationError("mesh.scale", "mesh scale must be positive");
  auto v = m.vertices;
  for (auto& p : v) p = scale * p + offset;
  return TriMesh::build(std::move(v), m.faces);
}

// ---------------------------------------------------------------------------
// Identity-map convergence

IdentityStudyParams IdentityStudyParams::from_config(const Config& cfg) {
  IdentityStudyParams p;
  p.surface = cfg.str("surface", "sphere");
  p.dx = dx_list(cfg);
  const auto method = cfg.str("method", "CPM");
  if (method == "CPM" || method == "cpm") {
    p.run_cpm = true;
    p.run_lsm = false;
  } else if (method == "LSM" || method == "lsm") {
    p.run_cpm = false;
    p.run_lsm = true;
  } else if (method == "both") {
    p.run_cpm = p.run_lsm = true;
  } else {
    throw ValidationError("method", "method must be CPM, LSM or both");
  }
  p.realizations = positive_int(cfg, "realizations", 16);
  p.t_final = cfg.real("t_final", 0.01);
  if (!(p.t_final >= 0)) throw ValidationError("t_final", "t_final must be >= 0");
  p.dt_factor = cfg.real("dt_factor", 0.1);
  p.degree = positive_int(cfg, "degree", 3);
  p.noise = noise_from(cfg, 0.05);
  p.lsm.band_factor = cfg.real("lsm.band_factor", 3.0);
  p.lsm.reextension_interval = positive_int(cfg, "lsm.reextension_interval", 1);
  p.lsm.validate();
  FlowSpec{.dt_factor = p.dt_factor}.validate();
  p.shape = cfg;
  make_surface(p.surface, cfg);  // validates the name and shape parameters
  return p;
}

ExperimentReport identity_map_study(const IdentityStudyParams& p) {
  const SurfacePtr surf = make_surface(p.surface, p.shape);
  FlowSpec spec;
  spec.dt_factor = p.dt_factor;
  ExperimentReport report;
  report.realizations = p.realizations;
  report.seeds = {p.noise.seed};

  for (double dx : p.dx) {
    const long steps = steps_for(p.t_final, p.dt_factor * dx * dx);
    const double dt = steps > 0 ? p.t_final / steps : p.dt_factor * dx * dx;

    auto run_method = [&](const std::string& method) -> ReportRow {
      const bool lsm = method == "LSM";
      BandOptions bo;
      bo.degree = p.degree;
      if (lsm) {
        bo.radius_factor = p.lsm.band_factor;
        bo.laplacian_ring = false;
      }
      auto band = std::make_shared<const Band>(build_band(*surf, dx, bo));
      std::shared_ptr<const Discretization> disc;
      std::unique_ptr<LsmSolver> lsm_solver;
      std::unique_ptr<CpmSolver> cpm_solver;
      if (lsm) {
        lsm_solver = std::make_unique<LsmSolver>(band, surf, surf, spec, p.lsm);
        lsm_solver->set_dt(dt);
      } else {
        disc = std::make_shared<const Discretization>(Discretization::on_band(band, surf));
        cpm_solver = std::make_unique<CpmSolver>(disc, surf, spec);
        cpm_solver->set_dt(dt);
      }
      const SparseOperator& E = lsm ? lsm_solver->extension() : disc->E;
      const auto rows = band->near_surface();

      double err_sum = 0, secs = 0;
      int ok = 0;
      for (int r = 0; r < p.realizations; ++r) {
        try {
          MapField u{noisy_map(*surf, band->cp, p.noise, static_cast<std::uint64_t>(r),
                               [&](std::size_t j) { return band->index[j]; }),
                     surf, 0.0};
          const auto t0 = Clock::now();
          for (long k = 0; k < steps; ++k) lsm ? lsm_solver->step(u) : cpm_solver->step(u);
          secs += seconds_since(t0);
          const double err = max_extended_error(E, u.values, rows, band->cp);
          err_sum += err;
          ++ok;
          if (p.progress)
            *p.progress << "converge surface=" << p.surface << " method=" << method << " dx=" << dx
                        << " realization=" << r << " error=" << err << std::endl;
        } catch (const SolverError& e) {
          std::ostringstream note;
          note << method << " dx=" << dx << " realization=" << r << " aborted: " << e.what() << " node=" << e.node();
          report.notes.push_back(note.str());
          if (p.progress) *p.progress << note.str() << std::endl;
        }
      }
      ReportRow row;
      row.dx = dx;
      row.method = method;
      row.error = ok ? err_sum / ok : std::numeric_limits<double>::quiet_NaN();
      row.seconds = ok ? secs / ok : std::numeric_limits<double>::quiet_NaN();
      row.speedup = std::numeric_limits<double>::quiet_NaN();
      return row;
    };

    std::optional<ReportRow> cpm, lsm;
    if (p.run_cpm) cpm = run_method("CPM");
    if (p.run_lsm) lsm = run_method("LSM");
    if (cpm && lsm) cpm->speedup = lsm->seconds / cpm->seconds;
    if (cpm) report.rows.push_back(*cpm);
    if (lsm) report.rows.push_back(*lsm);
  }
  fill_rates(report);
  return report;
}

// ---------------------------------------------------------------------------
// Plane -> S^2

PlaneSphereParams PlaneSphereParams::from_config(const Config& cfg) {
  PlaneSphereParams p;
  p.dx = dx_list(cfg);
  p.dx_ref = cfg.real("dx_ref", 0.00625);
  if (!(p.dx_ref > 0)) throw ValidationError("dx_ref", "dx_ref must be positive");
  for (double dx : p.dx) {
    const double ratio = dx / p.dx_ref;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1)
      throw ValidationError("dx_ref", "every dx must be an integer multiple of dx_ref");
  }
  p.realizations = positive_int(cfg, "realizations", 16);
  p.t_final = cfg.real("t_final", 0.01);
  if (!(p.t_final >= 0)) throw ValidationError("t_final", "t_final must be >= 0");
  p.dt_factor = cfg.real("dt_factor", 0.1);
  FlowSpec{.dt_factor = p.dt_factor}.validate();
  p.noise = noise_from(cfg, 0.05);
  return p;
}

Field solve_plane_sphere(double dx, double dx_ref, double t_final, double dt_factor, const NoiseSpec& noise,
                         std::uint64_t realization) {
  const int ratio = static_cast<int>(std::lround(dx / dx_ref));
  const PlaneRect plane(make_point({-1, -1}), make_point({1, 1}));
  auto band = std::make_shared<const Band>(build_band(plane, dx));
  auto disc = std::make_shared<const Discretization>(Discretization::on_plane(band, PlanarBoundary::Neumann));
  auto sphere = std::make_shared<Hypersphere>(3);
  FlowSpec spec;
  spec.dt_factor = dt_factor;
  CpmSolver solver(disc, sphere, spec);
  const long steps = steps_for(t_final, dt_factor * dx * dx);
  if (steps > 0) solver.set_dt(t_final / steps);

  std::vector<Eigen::Vector3d> w(band->size());
  for (std::size_t r = 0; r < band->size(); ++r) w[r] = inverse_stereographic(band->x[r][0], band->x[r][1]);
  // Noise is keyed by the node's index on the reference grid.
  MapField u{noisy_map(*sphere, w, noise, realization,
                       [&](std::size_t r) {
                         const auto& idx = band->index[r];
                         return Index3{idx[0] * ratio, idx[1] * ratio, 0};
                       }),
             sphere, 0.0};
  for (long k = 0; k < steps; ++k) solver.step(u);
  return u.values;
}

ExperimentReport plane_to_sphere_study(const PlaneSphereParams& p) {
  ExperimentReport report;
  report.realizations = p.realizations;
  report.seeds = {p.noise.seed};
  const int n_ref = static_cast<int>(std::lround(2 / p.dx_ref)) + 1;
  std::vector<double> err_sum(p.dx.size(), 0), secs(p.dx.size(), 0);
  int ok = 0;
  for (int r = 0; r < p.realizations; ++r) {
    try {
      const Field ref = solve_plane_sphere(p.dx_ref, p.dx_ref, p.t_final, p.dt_factor, p.noise, r);
      std::vector<double> errs(p.dx.size());
      std::vector<double> times(p.dx.size());
      for (std::size_t k = 0; k < p.dx.size(); ++k) {
        const double dx = p.dx[k];
        const int ratio = static_cast<int>(std::lround(dx / p.dx_ref));
        const int n = static_cast<int>(std::lround(2 / dx)) + 1;
        const auto t0 = Clock::now();
        const Field u = solve_plane_sphere(dx, p.dx_ref, p.t_final, p.dt_factor, p.noise, r);
        times[k] = seconds_since(t0);
        double worst = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            worst = std::max(worst, (u.row(i * n + j) - ref.row(i * ratio * n_ref + j * ratio)).norm());
        errs[k] = worst;
        if (p.progress)
          *p.progress << "plane-sphere dx=" << dx << " realization=" << r << " error=" << worst << std::endl;
      }
      for (std::size_t k = 0; k < p.dx.size(); ++k) {
        err_sum[k] += errs[k];
        secs[k] += times[k];
      }
      ++ok;
    } catch (const SolverError& e) {
      std::ostringstream note;
      note << "realization=" << r << " aborted: " << e.what() << " node=" << e.node();
      report.notes.push_back(note.str());
    }
  }
  for (std::size_t k = 0; k < p.dx.size(); ++k) {
    ReportRow row;
    row.dx = p.dx[k];
    row.method = "CPM";
    row.error = ok ? err_sum[k] / ok : std::numeric_limits<double>::quiet_NaN();
    row.seconds = ok ? secs[k] / ok : std::numeric_limits<double>::quiet_NaN();
    row.speedup = std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }
  fill_rates(report);
  return report;
}

// ---------------------------------------------------------------------------
// Texture maps

Image make_test_texture(int width, int height) {
  Image img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      auto* px = img.at(x, y);
      const int cx = 8 * x / width, cy = 8 * y / height;
      const bool dark = (cx + cy) % 2;
      // Hue varies by column block, value by checker parity.
      const double h = cx / 8.0;
      const double v = dark ? 90 : 235;
      px[0] = static_cast<std::uint8_t>(v * (0.5 + 0.5 * std::cos(2 * std::numbers::pi * h)));
      px[1] = static_cast<std::uint8_t>(v * (0.5 + 0.5 * std::cos(2 * std::numbers::pi * (h - 1.0 / 3))));
      px[2] = static_cast<std::uint8_t>(v * (0.5 + 0.5 * std::cos(2 * std::numbers::pi * (h - 2.0 / 3))));
    }
  return img;
}

TextureParams TextureParams::from_config(const Config& cfg) {
  TextureParams p;
  p.source = cfg.str("source", "plane");
  p.target = cfg.str("target", "sphere");
  const auto dx = dx_list(cfg);
  if (dx.size() != 1) throw ValidationError("dx", "texture takes a single dx");
  p.dx = dx[0];
  p.steps = cfg.integer("steps", 300);
  if (p.steps < 0) throw ValidationError("steps", "steps must be >= 0");
  p.noise = noise_from(cfg, 0.05);
  if (cfg.has("image")) p.image = cfg.str("image");
  if (cfg.has("mesh")) p.mesh = cfg.str("mesh");
  p.mesh_scale = cfg.real("mesh.scale", 1.0);
  p.mesh_offset = vec3_from(cfg, "mesh.offset", Eigen::Vector3d::Zero());
  p.plane_scale = cfg.real("plane.scale", 0.8);
  if (!(p.plane_scale > 0)) throw ValidationError("plane.scale", "plane.scale must be positive");
  p.grid_spacing = cfg.real("grid.spacing", 0);
  p.grid_radius = cfg.real("grid.radius", 0);
  p.stats_every = positive_int(cfg, "stats_every", 10);
  const bool ok = (p.source == "plane" && (p.target == "sphere" || p.target == "mesh")) ||
                  (p.source == "cylinder" && (p.target == "cap" || p.target == "sphere"));
  if (!ok) throw ValidationError("target", "unsupported source/target pair " + p.source + "->" + p.target);
  return p;
}

TextureResult texture_denoise(const TextureParams& p) {
  const Image image = p.image.empty() ? make_test_texture(256, 256) : read_image(p.image);
  TextureResult res;

  // Target surface.
  SurfacePtr target;
  std::shared_ptr<MeshSurface> mesh_target;
  if (p.target == "sphere") {
    target = std::make_shared<Hypersphere>(3);
  } else if (p.target == "cap") {
    target = make_surface("cap", Config{});
  } else if (p.target == "mesh") {
    TriMesh m = p.mesh.empty() ? make_standin_bunny() : load_mesh(p.mesh);
    mesh_target = std::make_shared<MeshSurface>(transform_mesh(m, p.mesh_scale, p.mesh_offset));
    const double spacing = p.grid_spacing > 0 ? p.grid_spacing : p.dx / 2;
    mesh_target->precompute(spacing, p.grid_radius > 0 ? p.grid_radius : 8 * spacing);
    target = mesh_target;
  } else {
    throw ValidationError("target", "unknown target '" + p.target + "'");
  }
  const bool angular = p.target != "mesh";

  // Source discretization, base map w and texture coordinates per row.
  std::shared_ptr<const Band> band;
  std::shared_ptr<const Discretization> disc;
  std::vector<Eigen::Vector3d> w;
  std::vector<std::array<double, 2>> tex;  // pixel coordinates
  std::vector<int> rows;
  if (p.source == "plane") {
    const PlaneRect plane(make_point({-1, -1}), make_point({1, 1}));
    band = std::make_shared<const Band>(build_band(plane, p.dx));
    disc = std::make_shared<const Discretization>(Discretization::on_plane(band, PlanarBoundary::Neumann));
    // Posed plane for mesh targets: the two widest bounding-box axes.
    Eigen::Vector3d centre = Eigen::Vector3d::Zero(), ea = Eigen::Vector3d::UnitX(), eb = Eigen::Vector3d::UnitY();
    if (mesh_target) {
      const Box b = mesh_target->bounds();
      const Eigen::Vector3d lo = to_vec(b.lo), hi = to_vec(b.hi), ext = hi - lo;
      centre = 0.5 * (lo + hi);
      std::array<int, 3> ax{0, 1, 2};
      std::sort(ax.begin(), ax.end(), [&](int i, int j) { return ext[i] > ext[j]; });
      ea = 0.5 * p.plane_scale * ext[ax[0]] * Eigen::Vector3d::Unit(ax[0]);
      eb = 0.5 * p.plane_scale * ext[ax[1]] * Eigen::Vector3d::Unit(ax[1]);
    }
    const PlanarShape g = disc->plane;
    w.resize(band->size());
    tex.resize(band->size());
    for (std::size_t r = 0; r < band->size(); ++r) {
      const double x = band->x[r][0], y = band->x[r][1];
      if (mesh_target)
        w[r] = to_vec(mesh_target->closest_point_any(to_point(centre + x * ea + y * eb)).cp);
      else
        w[r] = inverse_stereographic(x, y);
      const auto& idx = band->index[r];
      tex[r] = {static_cast<double>(idx[0]) / std::max(1, g.nx - 1) * (image.width - 1),
                (1 - static_cast<double>(idx[1]) / std::max(1, g.ny - 1)) * (image.height - 1)};
      rows.push_back(static_cast<int>(r));
    }
  } else {
    const SurfacePtr cyl = make_surface("cylinder", Config{});
    band = std::make_shared<const Band>(build_band(*cyl, p.dx));
    disc = std::make_shared<const Discretization>(Discretization::on_band(band, cyl));
    w.resize(band->size());
    tex.resize(band->size());
    for (std::size_t r = 0; r < band->size(); ++r) {
      const Eigen::Vector3d& c = band->cp[r];
      w[r] = to_vec(target->closest_point_any(to_point(c)).cp);
      const double th = std::atan2(c[1], c[0]);
      tex[r] = {(th + std::numbers::pi) / (2 * std::numbers::pi) * (image.width - 1),
                (2 - c[2]) / 4 * (image.height - 1)};
    }
    rows = band->near_surface();
  }
  res.nodes = band->size();

  FlowSpec spec;
  CpmSolver solver(disc, target, spec);
  MapField u{noisy_map(*target, w, p.noise, 0, [&](std::size_t r) { return band->index[r]; }), target, 0.0};
  res.initial = u.values;
  res.w = Field(static_cast<Eigen::Index>(w.size()), 3);
  for (std::size_t r = 0; r < w.size(); ++r) res.w.row(r) = w[r].transpose();

  // The noise-free map evolved alongside: w itself need not be stationary
  // (the chart does not satisfy the Neumann condition), so this isolates the
  // denoising from the drift of w.
  MapField clean{res.w, target, 0.0};
  auto distance = [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return angular ? std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) : (a - b).norm();
  };
  auto record = [&](long step, const Field& v) {
    double from_w = 0, from_ref = 0;
    for (int r : rows) {
      const Eigen::Vector3d a = v.row(r).transpose();
      from_w += distance(a, w[r]);
      from_ref += distance(a, clean.values.row(r).transpose());
    }
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    res.stat_steps.push_back(step);
    res.mean_displacement.push_back(from_w / n);
    res.reference_displacement.push_back(from_ref / n);
  };
  record(0, u.values);

  RunOptions opt;
  opt.steps = p.steps;
  opt.check_manifold = true;
  opt.log = p.log;
  opt.observer = [&](long k, const MapField& m) {
    solver.step(clean);
    if (k % p.stats_every == 0 || k == p.steps) record(k, m.values);
  };
  const RunSummary sum = run_cpm(solver, u, opt);
  res.max_manifold_distance = sum.max_manifold_distance;
  res.final = u.values;

  if (auto* cap = dynamic_cast<const SphericalCap*>(target.get())) {
    for (Eigen::Index r = 0; r < u.values.rows(); ++r) {
      const Eigen::Vector3d a = u.values.row(r).transpose();
      const double th = std::acos(std::clamp(a[2] / a.norm(), -1.0, 1.0));
      res.max_cap_violation =
          std::max({res.max_cap_violation, cap->theta_min() - th, th - cap->theta_max()});
    }
  }
  if (mesh_target) {
    res.mesh_queries = mesh_target->stats().queries;
    res.mesh_widened = mesh_target->stats().widened;
    res.mesh_fallbacks = mesh_target->stats().fallbacks;
  }

  if (!p.out.empty()) {
    std::filesystem::create_directories(p.out);
    auto cloud = [&](const Field& v) {
      std::vector<ColoredPoint> pts;
      pts.reserve(rows.size());
      for (int r : rows) {
        const auto rgb = to_rgb(sample_bilinear(image, tex[r][0], tex[r][1]));
        pts.push_back({v(r, 0), v(r, 1), v(r, 2), rgb[0], rgb[1], rgb[2]});
      }
      return pts;
    };
    const auto a = p.out / "texture_initial.ply", b = p.out / "texture_final.ply", c = p.out / "texture_stats.csv";
    write_ply(a, cloud(res.initial));
    write_ply(b, cloud(res.final));
    std::ostringstream csv;
    csv << "step,mean_displacement,reference_displacement\n";
    csv.precision(17);
    for (std::size_t i = 0; i < res.stat_steps.size(); ++i)
      csv << res.stat_steps[i] << ',' << res.mean_displacement[i] << ',' << res.reference_displacement[i] << '\n';
    write_text(c, csv.str());
    res.outputs = {a, b, c};
  }
  return res;
}

// ---------------------------------------------------------------------------
// Random maps

RandomMapParams RandomMapParams::from_config(const Config& cfg) {
  RandomMapParams p;
  const auto dx = dx_list(cfg);
  if (dx.size() != 1) throw ValidationError("dx", "random-map takes a single dx");
  p.dx = dx[0];
  p.max_steps = cfg.integer("steps", 4000);
  if (p.max_steps < 0) throw ValidationError("steps", "steps must be >= 0");
  p.check_every = positive_int(cfg, "check_every", 50);
  p.stop_ratio = cfg.real("stop_ratio", 0.05);
  if (!(p.stop_ratio >= 0)) throw ValidationError("stop_ratio", "stop_ratio must be >= 0");
  p.seed_vertices = positive_int(cfg, "seed_vertices", 16);
  p.neighbours = positive_int(cfg, "neighbours", 240);
  p.seed = cfg.u64("seed", 1);
  p.torus_R = cfg.real("torus.R", 1.25);
  p.torus_r = cfg.real("torus.r", 0.75);
  if (cfg.has("mesh")) p.mesh = cfg.str("mesh");
  p.mesh_scale = cfg.real("mesh.scale", 1.0);
  p.mesh_offset = vec3_from(cfg, "mesh.offset", Eigen::Vector3d::Zero());
  p.grid_spacing = cfg.real("grid.spacing", 0);
  p.grid_radius = cfg.real("grid.radius", 0);
  for (double s : cfg.reals("snapshots", {})) {
    if (!(s >= 0) || s != std::floor(s)) throw ValidationError("snapshots", "snapshot steps must be integers >= 0");
    p.snapshots.push_back(static_cast<long>(s));
  }
  return p;
}

double point_set_diameter(const std::vector<Eigen::Vector3d>& input) {
  std::vector<Eigen::Vector3d> pts = input;
  auto lex = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  std::sort(pts.begin(), pts.end(), lex);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 2) return 0;

  // Lower bound from extreme points along a few directions.
  double best2 = 0;
  const Eigen::Vector3d dirs[] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1},  {1, 1, 0},  {1, -1, 0}, {1, 0, 1}, {1, 0, -1},
                                  {0, 1, 1}, {0, 1, -1}, {1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {-1, 1, 1}};
  for (const auto& d : dirs) {
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].dot(d) < pts[lo].dot(d)) lo = i;
      if (pts[i].dot(d) > pts[hi].dot(d)) hi = i;
    }
    best2 = std::max(best2, (pts[lo] - pts[hi]).squaredNorm());
  }
  // Pairs with |p - c| + |q - c| below the bound cannot improve it.
  Eigen::Vector3d lo = pts[0], hi = pts[0];
  for (const auto& q : pts) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Eigen::Vector3d c = 0.5 * (lo + hi);
  std::vector<std::pair<double, std::size_t>> rad(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) rad[i] = {(pts[i] - c).norm(), i};
  std::sort(rad.begin(), rad.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < rad.size(); ++i) {
    const double best = std::sqrt(best2);
    if (rad[i].first + rad[0].first < best) break;
    for (std::size_t j = 0; j < i; ++j) {
      if (rad[i].first + rad[j].first < std::sqrt(best2)) break;
      best2 = std::max(best2, (pts[rad[i].second] - pts[rad[j].second]).squaredNorm());
    }
  }
  return std::sqrt(best2);
}

RandomMapResult random_map_study(const RandomMapParams& p) {
  RandomMapResult res;
  auto torus = std::make_shared<Torus>(p.torus_R, p.torus_r);
  TriMesh base = p.mesh.empty() ? make_standin_bunny() : load_mesh(p.mesh);
  auto target = std::make_shared<MeshSurface>(transform_mesh(base, p.mesh_scale, p.mesh_offset));
  const double spacing = p.grid_spacing > 0 ? p.grid_spacing : p.dx / 2;
  target->precompute(spacing, p.grid_radius > 0 ? p.grid_radius : 8 * spacing);
  const auto& verts = target->mesh().vertices;
  const int nv = static_cast<int>(verts.size());

  // Seed vertices and their k nearest vertices (including themselves).
  RngStream pick(p.seed, mix_stream_id(0x5eed, 1));
  const int n_seeds = std::min(p.seed_vertices, nv);
  std::set<int> chosen;
  while (static_cast<int>(res.seed_vertex.size()) < n_seeds) {
    const int v = static_cast<int>(pick.next_u32() % static_cast<std::uint32_t>(nv));
    if (chosen.insert(v).second) res.seed_vertex.push_back(v);
  }
  const int k = std::min(p.neighbours, nv);
  std::set<int> pool;
  for (int s : res.seed_vertex) {
    std::vector<std::pair<double, int>> d(nv);
    for (int v = 0; v < nv; ++v) d[v] = {(verts[v] - verts[s]).squaredNorm(), v};
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    for (int i = 0; i < k; ++i) pool.insert(d[i].second);
  }
  res.pool.assign(pool.begin(), pool.end());

  auto band = std::make_shared<const Band>(build_band(*torus, p.dx));
  auto disc = std::make_shared<const Discretization>(Discretization::on_band(band, torus));
  FlowSpec spec;
  CpmSolver solver(disc, target, spec);

  // Uniform sampling with replacement from the pool, one draw per node.
  RngStream sample(p.seed, mix_stream_id(0x5eed, 2));
  Field u0(static_cast<Eigen::Index>(band->size()), 3);
  res.initial_in_pool = true;
  for (std::size_t r = 0; r < band->size(); ++r) {
    const int v = res.pool[sample.next_u32() % static_cast<std::uint32_t>(res.pool.size())];
    u0.row(r) = verts[v].transpose();
    res.initial_in_pool = res.initial_in_pool && std::binary_search(res.pool.begin(), res.pool.end(), v);
  }
  MapField u{std::move(u0), target, 0.0};

  const auto rows = band->near_surface();
  auto image_set = [&](const Field& v) {
    std::vector<Eigen::Vector3d> pts(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) pts[i] = v.row(rows[i]).transpose();
    return pts;
  };
  if (!p.out.empty()) std::filesystem::create_directories(p.out);
  auto snapshot = [&](long step) {
    if (p.out.empty() || std::find(p.snapshots.begin(), p.snapshots.end(), step) == p.snapshots.end()) return;
    std::vector<ColoredPoint> pts;
    for (const auto& q : image_set(u.values)) pts.push_back({q[0], q[1], q[2], 0, 0, 255});
    const auto path = p.out / ("random_map_" + std::to_string(step) + ".ply");
    write_ply(path, pts);
    res.outputs.push_back(path);
  };

  res.initial_diameter = point_set_diameter(image_set(u.values));
  res.diameter.emplace_back(0, res.initial_diameter);
  res.final_diameter = res.initial_diameter;
  snapshot(0);
  long step = 0;
  const bool converged_already = res.initial_diameter == 0;
  while (step < p.max_steps && !converged_already) {
    solver.step(u);
    ++step;
    snapshot(step);
    if (step % p.check_every == 0 || step == p.max_steps) {
      res.final_diameter = point_set_diameter(image_set(u.values));
      res.diameter.emplace_back(step, res.final_diameter);
      if (p.progress) *p.progress << "random-map step=" << step << " diameter=" << res.final_diameter << std::endl;
      if (p.stop_ratio > 0 && res.final_diameter < p.stop_ratio * res.initial_diameter) break;
    }
  }
  res.steps = step;
  res.mesh_queries = target->stats().queries;
  res.mesh_widened = target->stats().widened;
  res.mesh_fallbacks = target->stats().fallbacks;

  if (!p.out.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,diameter\n";
    for (const auto& [s, d] : res.diameter) csv << s << ',' << d << '\n';
    const auto path = p.out / "diameter.csv";
    write_text(path, csv.str());
    res.outputs.push_back(path);
  }
  return res;
}

}  // namespace cpmap
