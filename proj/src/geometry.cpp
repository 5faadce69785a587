#include "cpmap/geometry.hpp"

#include "cpmap/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace cpmap {

Point make_point(std::initializer_list<double> v) {
  Point p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

CpResult Surface::closest_point(const Point& x) const {
  CpResult r = closest_point_any(x);
  if (!r.unique) throw DegenerateQuery(name() + ": closest point is not unique at query");
  return r;
}

double Surface::signed_distance(const Point&) const {
  throw Unsupported(name() + ": signed distance requires a closed surface");
}

Point Surface::normal(const Point&) const {
  throw Unsupported(name() + ": normal requires a closed surface");
}

// ---------------------------------------------------------------------------
// PlaneRect

PlaneRect::PlaneRect(Point lo, Point hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size() || lo_.size() < 2)
    throw ValidationError("plane", "plane extents must have matching dimension >= 2");
  for (Eigen::Index i = 0; i < lo_.size(); ++i)
    if (!(hi_[i] >= lo_[i])) throw ValidationError("plane", "plane extent is empty");
}

double PlaneRect::reach() const { return std::numeric_limits<double>::infinity(); }

CpResult PlaneRect::closest_point_any(const Point& x) const {
  CpResult r;
  r.cp = x.cwiseMax(lo_).cwiseMin(hi_);
  r.dist = (x - r.cp).norm();
  return r;
}

// ---------------------------------------------------------------------------
// Hypersphere

Hypersphere::Hypersphere(int n) : n_(n) {
  if (n < 2 || n > kMaxDim) throw ValidationError("sphere", "hypersphere dimension out of range");
}

Box Hypersphere::bounds() const {
  return {Point::Constant(n_, -1.0), Point::Constant(n_, 1.0)};
}

CpResult Hypersphere::closest_point_any(const Point& x) const {
  CpResult r;
  const double nrm = x.norm();
  if (nrm < kDegenerateTol) {
    r.cp = Point::Zero(n_);
    r.cp[0] = 1.0;
    r.dist = 1.0;
    r.unique = false;
    return r;
  }
  r.cp = x / nrm;
  r.dist = std::abs(nrm - 1.0);
  return r;
}

double Hypersphere::signed_distance(const Point& x) const { return x.norm() - 1.0; }

Point Hypersphere::normal(const Point& p) const {
  const double nrm = p.norm();
  if (nrm < kDegenerateTol) throw DegenerateQuery("sphere: normal at the centre");
  return p / nrm;
}

SmallMatrix cp_jacobian_hypersphere(const Point& u) {
  const double nrm = u.norm();
  if (nrm < kDegenerateTol) throw DegenerateQuery("hypersphere cp Jacobian at u = 0");
  const auto n = u.size();
  SmallMatrix J = SmallMatrix::Identity(n, n) / nrm;
  J.noalias() -= u * u.transpose() / (nrm * nrm * nrm);
  return J;
}

SmallMatrix cp_hessian_hypersphere(const Point& u, int i) {
  const double nrm = u.norm();
  if (nrm < kDegenerateTol) throw DegenerateQuery("hypersphere cp Hessian at u = 0");
  const auto n = u.size();
  if (i < 0 || i >= n) throw ValidationError("i", "component index out of range");
  const double n3 = nrm * nrm * nrm;
  const double n5 = n3 * nrm * nrm;
  SmallMatrix H(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double dij = (i == j) ? 1.0 : 0.0;
      const double dik = (i == k) ? 1.0 : 0.0;
      const double djk = (j == k) ? 1.0 : 0.0;
      H(j, k) = 3.0 * u[i] * u[j] * u[k] / n5 - (u[k] * dij + u[j] * dik + u[i] * djk) / n3;
    }
  return H;
}

// ---------------------------------------------------------------------------
// Ellipsoid
//
// Closest point on sum (x_i/e_i)^2 = 1 for a query in the first octant with
// axes sorted e0 >= e1 >= e2. Zero query components are handled by the
// lower-dimensional sub-problems; the remaining case is a monotone root
// problem in the Lagrange multiplier t.

namespace {

struct RootProblem {
  const double* e;  // semi-axes
  const double* y;  // query components (> 0)
  int n;

  double value(double t) const {
    double s = -1.0;
    for (int i = 0; i < n; ++i) {
      const double q = e[i] * y[i] / (t + e[i] * e[i]);
      s += q * q;
    }
    return s;
  }
  double slope(double t) const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = t + e[i] * e[i];
      const double q = e[i] * y[i] / d;
      s -= 2.0 * q * q / d;
    }
    return s;
  }
};

// Safeguarded Newton on the decreasing convex function F(t). Starting from the
// left bracket end the Newton iterates increase monotonically; bisection takes
// over if an iterate escapes the bracket.
double solve_multiplier(const double* e, const double* y, int n) {
  const RootProblem F{e, y, n};
  const double emin = e[n - 1];
  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += (e[i] * y[i]) * (e[i] * y[i]);
  double lo = -emin * emin + emin * y[n - 1];
  double hi = -emin * emin + std::sqrt(sq);
  if (hi < lo) std::swap(lo, hi);
  double t = lo;
  for (int it = 0; it < Ellipsoid::kMaxNewton; ++it) {
    const double f = F.value(t);
    if (std::abs(f) < 1e-12) break;
    if (f > 0) lo = t; else hi = t;
    const double df = F.slope(t);
    double next = (df != 0.0) ? t - f / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t) break;
    t = next;
  }
  return t;
}

// 2D ellipse with e0 >= e1, y >= 0 componentwise. `tie` is set when the
// minimizer has a mirror image (query on the major axis inside the evolute).
void closest_on_ellipse(const double e[2], const double y[2], double x[2], bool& tie) {
  if (y[1] > 0) {
    if (y[0] > 0) {
      const double t = solve_multiplier(e, y, 2);
      x[0] = e[0] * e[0] * y[0] / (t + e[0] * e[0]);
      x[1] = e[1] * e[1] * y[1] / (t + e[1] * e[1]);
    } else {
      x[0] = 0.0;
      x[1] = e[1];
    }
    return;
  }
  const double denom = e[0] * e[0] - e[1] * e[1];
  if (e[0] * y[0] < denom) {
    x[0] = e[0] * e[0] * y[0] / denom;
    const double r = x[0] / e[0];
    x[1] = e[1] * std::sqrt(std::max(0.0, 1.0 - r * r));
    tie = x[1] > kDegenerateTol;
  } else {
    x[0] = e[0];
    x[1] = 0.0;
  }
}

void closest_on_ellipsoid(const double e[3], const double y[3], double x[3], bool& tie) {
  if (y[2] > 0) {
    if (y[1] > 0) {
      if (y[0] > 0) {
        const double t = solve_multiplier(e, y, 3);
        for (int i = 0; i < 3; ++i) x[i] = e[i] * e[i] * y[i] / (t + e[i] * e[i]);
      } else {
        x[0] = 0.0;
        const double e2[2] = {e[1], e[2]}, y2[2] = {y[1], y[2]};
        double x2[2];
        closest_on_ellipse(e2, y2, x2, tie);
        x[1] = x2[0];
        x[2] = x2[1];
      }
    } else {
      x[1] = 0.0;
      if (y[0] > 0) {
        const double e2[2] = {e[0], e[2]}, y2[2] = {y[0], y[2]};
        double x2[2];
        closest_on_ellipse(e2, y2, x2, tie);
        x[0] = x2[0];
        x[2] = x2[1];
      } else {
        x[0] = 0.0;
        x[2] = e[2];
      }
    }
    return;
  }
  const double d0 = e[0] * e[0] - e[2] * e[2];
  const double d1 = e[1] * e[1] - e[2] * e[2];
  const double n0 = e[0] * y[0];
  const double n1 = e[1] * y[1];
  if (n0 < d0 && n1 < d1) {
    const double q0 = n0 / d0, q1 = n1 / d1;
    const double discr = 1.0 - q0 * q0 - q1 * q1;
    if (discr > 0) {
      x[0] = e[0] * q0;
      x[1] = e[1] * q1;
      x[2] = e[2] * std::sqrt(discr);
      tie = x[2] > kDegenerateTol;
      return;
    }
  }
  x[2] = 0.0;
  const double e2[2] = {e[0], e[1]}, y2[2] = {y[0], y[1]};
  double x2[2];
  closest_on_ellipse(e2, y2, x2, tie);
  x[0] = x2[0];
  x[1] = x2[1];
}

}  // namespace

Ellipsoid::Ellipsoid(double a, double b, double c) : axes_{a, b, c} {
  if (!(a > 0 && b > 0 && c > 0)) throw ValidationError("ellipsoid", "semi-axes must be positive");
}

Box Ellipsoid::bounds() const {
  const Point h = make_point({axes_[0], axes_[1], axes_[2]});
  return {-h, h};
}

double Ellipsoid::reach() const {
  // Smallest principal radius of curvature, attained at an end of the longest axis.
  const double emax = std::max({axes_[0], axes_[1], axes_[2]});
  const double emin = std::min({axes_[0], axes_[1], axes_[2]});
  return emin * emin / emax;
}

CpResult Ellipsoid::closest_point_any(const Point& x) const {
  std::array<int, 3> perm = {0, 1, 2};
  std::stable_sort(perm.begin(), perm.end(), [&](int i, int j) { return axes_[i] > axes_[j]; });
  double e[3], y[3], z[3];
  for (int k = 0; k < 3; ++k) {
    e[k] = axes_[perm[k]];
    y[k] = std::abs(x[perm[k]]);
    if (y[k] < kDegenerateTol) y[k] = 0.0;
  }
  bool tie = false;
  closest_on_ellipsoid(e, y, z, tie);
  CpResult r;
  r.cp = Point(3);
  for (int k = 0; k < 3; ++k) {
    const int ax = perm[k];
    r.cp[ax] = std::copysign(z[k], x[ax] == 0.0 ? 1.0 : x[ax]);
  }
  r.dist = (x - r.cp).norm();
  r.unique = !tie;
  return r;
}

double Ellipsoid::signed_distance(const Point& x) const {
  const double d = closest_point_any(x).dist;
  double level = 0.0;
  for (int i = 0; i < 3; ++i) level += (x[i] / axes_[i]) * (x[i] / axes_[i]);
  return level < 1.0 ? -d : d;
}

Point Ellipsoid::normal(const Point& p) const {
  Point g(3);
  for (int i = 0; i < 3; ++i) g[i] = p[i] / (axes_[i] * axes_[i]);
  return g.normalized();
}

// ---------------------------------------------------------------------------
// Torus

Torus::Torus(double major, double minor) : R_(major), r_(minor) {
  if (!(major > 0 && minor > 0)) throw ValidationError("torus", "radii must be positive");
  if (!(minor < major)) throw ValidationError("torus", "torus requires r < R");
}

Box Torus::bounds() const {
  const double a = R_ + r_;
  return {make_point({-a, -a, -r_}), make_point({a, a, r_})};
}

double Torus::reach() const { return std::min(r_, R_ - r_); }

CpResult Torus::closest_point_any(const Point& x) const {
  CpResult r;
  bool unique = true;
  const double rho = std::hypot(x[0], x[1]);
  double cx = 1.0, cy = 0.0;
  if (rho < kDegenerateTol) {
    unique = false;
  } else {
    cx = x[0] / rho;
    cy = x[1] / rho;
  }
  const Point centre = make_point({R_ * cx, R_ * cy, 0.0});
  Point v = x - centre;
  double vn = v.norm();
  if (vn < kDegenerateTol) {
    unique = false;
    v = make_point({cx, cy, 0.0});
    vn = 1.0;
  }
  r.cp = centre + (r_ / vn) * v;
  r.dist = (x - r.cp).norm();
  r.unique = unique;
  return r;
}

double Torus::signed_distance(const Point& x) const {
  const double rho = std::hypot(x[0], x[1]);
  return std::hypot(rho - R_, x[2]) - r_;
}

Point Torus::normal(const Point& p) const {
  const double rho = std::hypot(p[0], p[1]);
  if (rho < kDegenerateTol) throw DegenerateQuery("torus: normal on the axis");
  const Point centre = make_point({R_ * p[0] / rho, R_ * p[1] / rho, 0.0});
  const Point v = p - centre;
  const double vn = v.norm();
  if (vn < kDegenerateTol) throw DegenerateQuery("torus: normal on the core circle");
  return v / vn;
}

// ---------------------------------------------------------------------------
// CylinderSegment

CylinderSegment::CylinderSegment(double radius, double z0, double z1)
    : radius_(radius), z0_(z0), z1_(z1) {
  if (!(radius > 0)) throw ValidationError("cylinder", "radius must be positive");
  if (!(z1 > z0)) throw ValidationError("cylinder", "z-interval must be nonempty");
}

Box CylinderSegment::bounds() const {
  return {make_point({-radius_, -radius_, z0_}), make_point({radius_, radius_, z1_})};
}

CpResult CylinderSegment::closest_point_any(const Point& x) const {
  const double rho = std::hypot(x[0], x[1]);
  double cx = 1.0, cy = 0.0;
  bool unique = true;
  if (rho < kDegenerateTol) {
    unique = false;
  } else {
    cx = x[0] / rho;
    cy = x[1] / rho;
  }
  const double px = radius_ * cx, py = radius_ * cy;
  auto dist_to = [&](double z) { return std::hypot(rho - radius_, x[2] - z); };

  // Rim candidates first: an exact tie (to 1e-14) keeps the rim point.
  double best_z = z0_;
  double best = dist_to(z0_);
  if (const double d1 = dist_to(z1_); d1 < best - 1e-14) {
    best = d1;
    best_z = z1_;
  }
  if (x[2] > z0_ && x[2] < z1_) {
    const double ds = std::abs(rho - radius_);
    if (ds < best - 1e-14) {
      best = ds;
      best_z = x[2];
    }
  }
  CpResult r;
  r.cp = make_point({px, py, best_z});
  r.dist = (x - r.cp).norm();
  r.unique = unique;
  return r;
}

// ---------------------------------------------------------------------------
// SphericalCap

SphericalCap::SphericalCap(double theta_min, double theta_max) : tmin_(theta_min), tmax_(theta_max) {
  if (!(theta_min >= 0 && theta_max <= std::numbers::pi && theta_min < theta_max))
    throw ValidationError("cap", "polar-angle band must satisfy 0 <= min < max <= pi");
}

Box SphericalCap::bounds() const {
  const double zlo = std::cos(tmax_), zhi = std::cos(tmin_);
  return {make_point({-1.0, -1.0, zlo}), make_point({1.0, 1.0, zhi})};
}

CpResult SphericalCap::closest_point_any(const Point& x) const {
  CpResult r;
  const double nrm = x.norm();
  if (nrm < kDegenerateTol) {
    r.cp = make_point({std::sin(tmin_), 0.0, std::cos(tmin_)});
    r.dist = 1.0;
    r.unique = false;
    return r;
  }
  const double theta = std::acos(std::clamp(x[2] / nrm, -1.0, 1.0));
  if (theta >= tmin_ && theta <= tmax_) {
    r.cp = x / nrm;
    r.dist = std::abs(nrm - 1.0);
    return r;
  }
  const double tb = std::clamp(theta, tmin_, tmax_);
  const double rho = std::hypot(x[0], x[1]);
  double cx = 1.0, cy = 0.0;
  if (rho < kDegenerateTol) {
    r.unique = false;
  } else {
    cx = x[0] / rho;
    cy = x[1] / rho;
  }
  r.cp = make_point({std::sin(tb) * cx, std::sin(tb) * cy, std::cos(tb)});
  r.dist = (x - r.cp).norm();
  return r;
}

}  // namespace cpmap
