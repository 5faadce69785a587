#include "cpmap/solver.hpp"

#include "cpmap/error.hpp"
#include "cpmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace cpmap {

void FlowSpec::validate() const {
  if (!(dt_factor > 0 && dt_factor <= 0.5)) throw ValidationError("dt_factor", "dt_factor must lie in (0, 0.5]");
  if (!(p >= 1)) throw ValidationError("p", "p must be >= 1");
  if (!(delta > 0)) throw ValidationError("delta", "delta must be positive");
}

void LsmConfig::validate() const {
  if (!(band_factor >= 1)) throw ValidationError("lsm.band_factor", "band_factor must be >= 1");
  if (reextension_interval < 1) throw ValidationError("lsm.reextension_interval", "interval must be >= 1");
}

long steps_for(double t_final, double dt_max) {
  if (!(t_final >= 0) || !(dt_max > 0)) throw ValidationError("t_final", "final time must be >= 0");
  return static_cast<long>(std::ceil(t_final / dt_max - 1e-9));
}

// ---------------------------------------------------------------------------
// Discretization

Discretization Discretization::on_band(std::shared_ptr<const Band> band, SurfacePtr source) {
  Discretization d;
  d.band = std::move(band);
  d.source = std::move(source);
  d.extend = true;
  d.E = assemble_extension(*d.band);
  d.L = assemble_laplacian(*d.band, true);
  d.grad = assemble_gradients(*d.band, true);
  return d;
}

Discretization Discretization::on_plane(std::shared_ptr<const Band> band, PlanarBoundary bc) {
  Discretization d;
  d.band = std::move(band);
  d.extend = false;
  d.plane = planar_shape(*d.band);
  d.L = assemble_planar_laplacian(d.plane, bc);
  d.grad = assemble_planar_gradients(d.plane);
  return d;
}

// ---------------------------------------------------------------------------
// Right-hand sides

namespace {

std::vector<Field> forward_gradients(const Discretization& d, const Field& v) {
  std::vector<Field> g(d.grad.size());
  for (std::size_t a = 0; a < d.grad.size(); ++a) spmv(d.grad[a].forward, v, g[a]);
  return g;
}

Field backward_divergence(const Discretization& d, const std::vector<Field>& flux) {
  Field out = Field::Zero(flux[0].rows(), flux[0].cols());
  Field tmp;
  for (std::size_t a = 0; a < d.grad.size(); ++a) {
    spmv(d.grad[a].backward, flux[a], tmp);
    out += tmp;
  }
  return out;
}

void zero_inactive(const Discretization& d, Field& f) {
  for (std::size_t r = 0; r < d.size(); ++r)
    if (!d.active(r)) f.row(r).setZero();
}

double jacobian_norm(const std::vector<Field>& g, Eigen::Index r) {
  double s = 0;
  for (const auto& ga : g) s += ga.row(r).squaredNorm();
  return std::sqrt(s);
}

}  // namespace

Field rhs_harmonic(const Discretization& d, const Field& v) {
  Field out;
  spmv(d.L, v, out);
  return out;
}

Field rhs_p_harmonic(const Discretization& d, const Field& v, double p, double delta) {
  auto g = forward_gradients(d, v);
  if (p != 2.0) {
    const double expo = 1.0 - 2.0 / p;
    const auto rows = static_cast<std::ptrdiff_t>(v.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const double jn = jacobian_norm(g, r);
      // Regularized as in the p = 1 case so that vanishing Jacobians stay finite.
      const double e = p < 2 ? std::pow(jn + delta, p) / p : std::pow(jn, p) / p;
      const double s = std::pow(e, expo);
      for (auto& ga : g) ga.row(r) *= s;
    }
  }
  Field out = backward_divergence(d, g);
  if (p != 2.0) out *= std::pow(p, 1.0 - 2.0 / p);
  zero_inactive(d, out);
  return out;
}

Field rhs_anisotropic_plane(const Discretization& d, const Field& v, double delta) {
  auto g = forward_gradients(d, v);
  const auto rows = static_cast<std::ptrdiff_t>(v.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const double s = 1.0 / (jacobian_norm(g, r) + delta);
    for (auto& ga : g) ga.row(r) *= s;
  }
  Field out = backward_divergence(d, g);
  zero_inactive(d, out);
  return out;
}

// ---------------------------------------------------------------------------
// CPM

CpmSolver::CpmSolver(std::shared_ptr<const Discretization> d, SurfacePtr target, FlowSpec spec, bool serial)
    : d_(std::move(d)), target_(std::move(target)), spec_(spec), serial_(serial) {
  spec_.validate();
  if (spec_.kind == FlowSpec::Kind::AnisotropicPlane && d_->extend)
    throw Unsupported("the anisotropic flow is defined for planar sources only");
  dt_ = spec_.dt_factor * d_->band->dx * d_->band->dx;
}

Field CpmSolver::extend(const Field& u) const {
  if (!d_->extend) return u;
  Field v;
  serial_ ? spmv_serial(d_->E, u, v) : spmv(d_->E, u, v);
  return v;
}

Field CpmSolver::rhs(const Field& v) const {
  switch (spec_.kind) {
    case FlowSpec::Kind::Harmonic: return rhs_harmonic(*d_, v);
    case FlowSpec::Kind::PHarmonic: return rhs_p_harmonic(*d_, v, spec_.p, spec_.delta);
    case FlowSpec::Kind::AnisotropicPlane: return rhs_anisotropic_plane(*d_, v, spec_.delta);
  }
  return {};
}

Field CpmSolver::evolve(const Field& v) const {
  Field w;
  if (spec_.kind == FlowSpec::Kind::Harmonic) {
    serial_ ? euler_update_serial(d_->L, v, dt_, w) : euler_update(d_->L, v, dt_, w);
  } else {
    w = v + dt_ * rhs(v);
  }
  return w;
}

void CpmSolver::step(MapField& u) const {
  const Field w = evolve(extend(u.values));
  const auto out = serial_ ? project_rows_serial(*target_, w, u.values) : project_rows(*target_, w, u.values);
  raise_projection_failure(out, "cpm step");
  u.time += dt_;
}

// ---------------------------------------------------------------------------
// LSM

Eigen::Vector3d band_normal(const Band& band, const Surface& source, std::size_t row) {
  if (source.closed() && band.dim == 3) {
    Point p(3);
    p << band.cp[row][0], band.cp[row][1], band.cp[row][2];
    const Point n = source.normal(p);
    return {n[0], n[1], n[2]};
  }
  if (band.dist[row] > 1e-8) return (band.x[row] - band.cp[row]) / band.dist[row];
  return Eigen::Vector3d::Zero();
}

LsmSolver::LsmSolver(std::shared_ptr<const Band> band, SurfacePtr source, SurfacePtr target, FlowSpec spec,
                     LsmConfig cfg)
    : band_(std::move(band)), target_(std::move(target)), spec_(spec), cfg_(cfg) {
  spec_.validate();
  cfg_.validate();
  if (spec_.kind != FlowSpec::Kind::Harmonic) throw Unsupported("the level-set baseline implements the harmonic flow");
  if (!source->closed() || !target_->closed())
    throw Unsupported("the level-set baseline needs closed source and target surfaces");
  E_ = assemble_extension(*band_);
  grad_ = assemble_gradients(*band_, true);
  normal_.resize(band_->size());
  for (std::size_t r = 0; r < band_->size(); ++r) normal_[r] = band_normal(*band_, *source, r);
  dt_ = spec_.dt_factor * band_->dx * band_->dx;
}

Field LsmSolver::rhs(const Field& v) const {
  const int m = band_->dim;
  const Eigen::Index n = v.cols();
  std::vector<Field> g(m);
  for (int a = 0; a < m; ++a) spmv(grad_[a].forward, v, g[a]);
  const auto rows = static_cast<std::ptrdiff_t>(v.rows());
  // Q grad^+ v: remove the normal component of each component's gradient.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto& nr = normal_[r];
    for (Eigen::Index i = 0; i < n; ++i) {
      double gn = 0;
      for (int a = 0; a < m; ++a) gn += g[a](r, i) * nr[a];
      for (int a = 0; a < m; ++a) g[a](r, i) -= gn * nr[a];
    }
  }
  Field div = Field::Zero(v.rows(), n), tmp;
  for (int a = 0; a < m; ++a) {
    spmv(grad_[a].backward, g[a], tmp);
    div += tmp;
  }
  // P(v): project onto the tangent space of N at cp_N(v).
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    Point q(n);
    for (Eigen::Index c = 0; c < n; ++c) q[c] = v(r, c);
    const Point nu = target_->normal(target_->closest_point_any(q).cp);
    double dn = 0;
    for (Eigen::Index c = 0; c < n; ++c) dn += div(r, c) * nu[c];
    for (Eigen::Index c = 0; c < n; ++c) div(r, c) -= dn * nu[c];
  }
  return div;
}

void LsmSolver::step(MapField& u) const {
  Field v;
  if (steps_taken_ % cfg_.reextension_interval == 0)
    spmv(E_, u.values, v);
  else
    v = u.values;
  const Field w = v + dt_ * rhs(v);
  raise_projection_failure(project_rows(*target_, w, u.values), "lsm step");
  u.time += dt_;
  ++steps_taken_;
}

// ---------------------------------------------------------------------------
// Diagnostics

double dirichlet_energy(const Discretization& d, const Field& v) {
  if (!d.extend) return planar_energy(d.plane, v);
  const Band& band = *d.band;
  auto g = forward_gradients(d, v);
  const double w = std::pow(band.dx, band.dim) / (2.0 * band.lambda_c);
  double e = 0;
  for (int r : band.near_surface()) {
    const Eigen::Vector3d n = band_normal(band, *d.source, r);
    double s = 0;
    for (Eigen::Index i = 0; i < v.cols(); ++i) {
      double gn = 0, g2 = 0;
      for (int a = 0; a < band.dim; ++a) {
        g2 += g[a](r, i) * g[a](r, i);
        gn += g[a](r, i) * n[a];
      }
      s += g2 - gn * gn;
    }
    e += s;
  }
  return 0.5 * w * e;
}

SmallMatrix cp_jacobian(const Surface& target, const Point& u) {
  if (dynamic_cast<const Hypersphere*>(&target)) return cp_jacobian_hypersphere(u);
  const Eigen::Index n = u.size();
  constexpr double h = 1e-6;
  SmallMatrix J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Point a = u, b = u;
    a[j] += h;
    b[j] -= h;
    J.col(j) = (target.closest_point(a).cp - target.closest_point(b).cp) / (2 * h);
  }
  return J;
}

ProbeResult consistency_probe(const CpmSolver& solver, const Field& u0, double h) {
  const auto& d = solver.disc();
  const Field v = solver.extend(u0);
  const Field F = solver.rhs(v);
  std::vector<int> rows;
  if (d.extend) {
    for (int r : d.band->near_surface())
      if (d.active(r)) rows.push_back(r);
  } else {
    for (std::size_t r = 0; r < d.size(); ++r)
      if (d.active(r)) rows.push_back(static_cast<int>(r));
  }
  const Eigen::Index n = v.cols();
  ProbeResult res;
  std::vector<Point> base(rows.size()), jf(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    Point vr(n), fr(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      vr[c] = v(rows[t], c);
      fr[c] = F(rows[t], c);
    }
    base[t] = solver.target().closest_point(vr).cp;
    jf[t] = cp_jacobian(solver.target(), vr) * fr;
  }
  for (int k = 0; k < 3; ++k) {
    const double dt = h / std::pow(2.0, k);
    double worst = 0;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      Point w(n);
      for (Eigen::Index c = 0; c < n; ++c) w[c] = v(rows[t], c) + dt * F(rows[t], c);
      const Point split = solver.target().closest_point(w).cp;
      worst = std::max(worst, (split - base[t] - dt * jf[t]).norm());
    }
    res.dt[k] = dt;
    res.difference[k] = worst;
  }
  const double o1 = std::log2(res.difference[0] / res.difference[1]);
  const double o2 = std::log2(res.difference[1] / res.difference[2]);
  res.order = std::min(o1, o2);
  return res;
}

// ---------------------------------------------------------------------------
// Time loop

RunSummary run_cpm(const CpmSolver& solver, MapField& u, const RunOptions& opt) {
  RunSummary sum;
  const auto& d = solver.disc();
  const bool need_prev = opt.steady_stop || opt.log;
  Field prev;
  if (opt.log) *opt.log << "step,time,energy,max_displacement\n";
  for (long k = 0; k < opt.steps; ++k) {
    if (need_prev) prev = u.values;

    // Independent re-evaluation of cp_N(Eu + dt L Eu) on sampled rows.
    std::vector<std::pair<int, Point>> expect;
    if (opt.verify_every > 0 && k % opt.verify_every == 0 && solver.spec().kind == FlowSpec::Kind::Harmonic) {
      RngStream rng(0x5eedULL, static_cast<std::uint64_t>(k));
      const Eigen::Index n = u.values.cols();
      auto ext_row = [&](int c) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        if (!d.extend) return Eigen::VectorXd(u.values.row(c).transpose());
        for (auto e = d.E.row_ptr[c]; e < d.E.row_ptr[c + 1]; ++e) s += d.E.val[e] * u.values.row(d.E.col[e]).transpose();
        return s;
      };
      for (int s = 0; s < 32; ++s) {
        const int r = static_cast<int>(rng.next_u32() % d.size());
        Eigen::VectorXd w = ext_row(r);
        Eigen::VectorXd lap = Eigen::VectorXd::Zero(n);
        for (auto e = d.L.row_ptr[r]; e < d.L.row_ptr[r + 1]; ++e) lap += d.L.val[e] * ext_row(d.L.col[e]);
        w += solver.dt() * lap;
        Point q(n);
        for (Eigen::Index c = 0; c < n; ++c) q[c] = w[c];
        expect.emplace_back(r, solver.target().closest_point_any(q).cp);
      }
    }

    solver.step(u);
    ++sum.steps;

    for (const auto& [r, cp] : expect)
      for (Eigen::Index c = 0; c < u.values.cols(); ++c)
        sum.max_verify_error = std::max(sum.max_verify_error, std::abs(u.values(r, c) - cp[c]));

    if (opt.check_manifold) {
      double worst = 0;
      const Eigen::Index n = u.values.cols();
#pragma omp parallel for schedule(static) reduction(max : worst)
      for (Eigen::Index r = 0; r < u.values.rows(); ++r) {
        Point q(n);
        for (Eigen::Index c = 0; c < n; ++c) q[c] = u.values(r, c);
        worst = std::max(worst, solver.target().closest_point_any(q).dist);
      }
      sum.max_manifold_distance = std::max(sum.max_manifold_distance, worst);
    }

    double disp = 0;
    if (need_prev) disp = (u.values - prev).cwiseAbs().maxCoeff();
    if (opt.log && (k + 1) % std::max(1L, opt.log_every) == 0) {
      const double e = dirichlet_energy(d, solver.extend(u.values));
      sum.energy.push_back(e);
      *opt.log << (k + 1) << ',' << u.time << ',' << e << ',' << disp << '\n';
    }
    if (opt.observer) opt.observer(k + 1, u);
    if (opt.steady_stop && disp / solver.dt() < opt.steady_tol) {
      sum.steady = true;
      break;
    }
  }
  return sum;
}

}  // namespace cpmap
