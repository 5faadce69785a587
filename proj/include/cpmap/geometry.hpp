#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>

namespace cpmap {

inline constexpr int kMaxDim = 16;

/// A point of R^m (m <= kMaxDim). Fixed-capacity storage, no heap traffic.
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using SmallMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

/// Threshold below which a candidate direction is treated as undefined.
inline constexpr double kDegenerateTol = 1e-12;

struct CpResult {
  Point cp;
  double dist = 0.0;
  bool unique = true;
};

struct Box {
  Point lo;
  Point hi;
};

/// Closest point representation of a manifold embedded in R^dim().
///
/// `closest_point_any` always returns some minimizer and reports ties through
/// `CpResult::unique`; `closest_point` throws DegenerateQuery instead. Band
/// construction uses the former (nodes on a cut locus still need a value), the
/// projection step of a flow uses the latter.
class Surface {
 public:
  virtual ~Surface() = default;

  virtual int dim() const = 0;
  virtual bool closed() const = 0;
  virtual std::string name() const = 0;
  virtual Box bounds() const = 0;
  /// Radius of the tubular neighbourhood on which cp is unique.
  virtual double reach() const = 0;

  virtual CpResult closest_point_any(const Point& x) const = 0;
  CpResult closest_point(const Point& x) const;

  /// Negative inside, positive outside. Closed surfaces only.
  virtual double signed_distance(const Point& x) const;
  /// Unit outward normal at a surface point. Closed surfaces only.
  virtual Point normal(const Point& p) const;
};

using SurfacePtr = std::shared_ptr<const Surface>;

/// Axis-aligned box { lo <= x <= hi }; zero-width axes give embedded planes.
class PlaneRect final : public Surface {
 public:
  PlaneRect(Point lo, Point hi);
  int dim() const override { return static_cast<int>(lo_.size()); }
  bool closed() const override { return false; }
  std::string name() const override { return "plane"; }
  Box bounds() const override { return {lo_, hi_}; }
  double reach() const override;
  CpResult closest_point_any(const Point& x) const override;

 private:
  Point lo_, hi_;
};

/// Unit sphere S^{n-1} centred at the origin of R^n.
class Hypersphere final : public Surface {
 public:
  explicit Hypersphere(int n);
  int dim() const override { return n_; }
  bool closed() const override { return true; }
  std::string name() const override { return "sphere"; }
  Box bounds() const override;
  double reach() const override { return 1.0; }
  CpResult closest_point_any(const Point& x) const override;
  double signed_distance(const Point& x) const override;
  Point normal(const Point& p) const override;

 private:
  int n_;
};

class Ellipsoid final : public Surface {
 public:
  Ellipsoid(double a, double b, double c);
  int dim() const override { return 3; }
  bool closed() const override { return true; }
  std::string name() const override { return "ellipsoid"; }
  Box bounds() const override;
  double reach() const override;
  CpResult closest_point_any(const Point& x) const override;
  double signed_distance(const Point& x) const override;
  Point normal(const Point& p) const override;

  /// Newton iterations used by the last-resort root solve; exposed for tests.
  static constexpr int kMaxNewton = 60;

 private:
  double axes_[3];
};

/// Torus around the z axis with major radius R and tube radius r < R.
class Torus final : public Surface {
 public:
  Torus(double major, double minor);
  int dim() const override { return 3; }
  bool closed() const override { return true; }
  std::string name() const override { return "torus"; }
  Box bounds() const override;
  double reach() const override;
  CpResult closest_point_any(const Point& x) const override;
  double signed_distance(const Point& x) const override;
  Point normal(const Point& p) const override;

 private:
  double R_, r_;
};

/// Side of a z-aligned cylinder without caps.
class CylinderSegment final : public Surface {
 public:
  CylinderSegment(double radius, double z0, double z1);
  int dim() const override { return 3; }
  bool closed() const override { return false; }
  std::string name() const override { return "cylinder"; }
  Box bounds() const override;
  double reach() const override { return radius_; }
  CpResult closest_point_any(const Point& x) const override;

 private:
  double radius_, z0_, z1_;
};

/// Zone of the unit sphere with polar angle in [theta_min, theta_max].
class SphericalCap final : public Surface {
 public:
  SphericalCap(double theta_min, double theta_max);
  int dim() const override { return 3; }
  bool closed() const override { return false; }
  std::string name() const override { return "cap"; }
  Box bounds() const override;
  double reach() const override { return 1.0; }
  CpResult closest_point_any(const Point& x) const override;

  double theta_min() const { return tmin_; }
  double theta_max() const { return tmax_; }

 private:
  double tmin_, tmax_;
};

// Derivatives of cp for the unit hypersphere, cp(u) = u / |u|.

/// Rows are grad(u_i / |u|); equals I - u u^T for |u| = 1.
SmallMatrix cp_jacobian_hypersphere(const Point& u);
/// Hessian of the i-th component of cp (0-based i).
SmallMatrix cp_hessian_hypersphere(const Point& u, int i);

Point make_point(std::initializer_list<double> v);

}  // namespace cpmap
