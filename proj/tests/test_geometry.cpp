#include "cpmap/error.hpp"
#include "cpmap/geometry.hpp"
#include "cpmap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

using namespace cpmap;

namespace {

Point random_near(const Surface& s, RngStream& rng, double band) {
  // A random surface point pushed off along a random direction.
  const Box b = s.bounds();
  Point q(s.dim());
  for (int i = 0; i < s.dim(); ++i) q[i] = b.lo[i] + (b.hi[i] - b.lo[i]) * rng.uniform();
  Point c = s.closest_point_any(q).cp;
  Point d(s.dim());
  for (int i = 0; i < s.dim(); ++i) d[i] = rng.normal();
  return c + band * rng.uniform() * d.normalized();
}

// Dense parametric samples of the torus, for brute-force minimisation.
double torus_brute_distance(double R, double r, const Point& x) {
  double best = 1e300;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const double th = 2 * std::numbers::pi * i / n;
    for (int j = 0; j < n; j += 1) {
      const double ph = 2 * std::numbers::pi * j / n;
      const double px = (R + r * std::cos(ph)) * std::cos(th), py = (R + r * std::cos(ph)) * std::sin(th),
                   pz = r * std::sin(ph);
      best = std::min(best, std::hypot(x[0] - px, x[1] - py, x[2] - pz));
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("hypersphere closest point") {
    const Hypersphere s(3);
    const auto r = s.closest_point(make_point({2, 0, 0}));
    CHECK(r.cp.isApprox(make_point({1, 0, 0})));
    CHECK(r.dist == doctest::Approx(1.0));
    CHECK_THROWS_AS(s.closest_point(make_point({0, 0, 0})), DegenerateQuery);
    CHECK(s.signed_distance(make_point({0, 0, 0.5})) == doctest::Approx(-0.5));
    CHECK(s.normal(make_point({0, 1, 0})).isApprox(make_point({0, 1, 0})));
  }

  TEST_CASE("torus closest point and signed distance") {
    const Torus t(1.25, 0.75);
    const auto r = t.closest_point(make_point({3, 0, 0}));
    CHECK((r.cp - make_point({2, 0, 0})).norm() < 1e-12);
    CHECK(r.dist == doctest::Approx(1.0));
    const Point q = make_point({1.25, 0, 0.70});
    CHECK(t.signed_distance(q) == doctest::Approx(-0.05).epsilon(1e-12));
    CHECK(std::abs(t.signed_distance(q)) == doctest::Approx(torus_brute_distance(1.25, 0.75, q)).epsilon(1e-5));
    CHECK((t.normal(make_point({2, 0, 0})) - make_point({1, 0, 0})).norm() < 1e-12);
    CHECK_THROWS_AS(t.closest_point(make_point({0, 0, 0.3})), DegenerateQuery);
  }

  TEST_CASE("torus normal matches the signed-distance gradient") {
    const Torus t(1.25, 0.75);
    const Point p = t.closest_point(make_point({0.4, 1.9, 0.5})).cp;
    Point g(3);
    for (int i = 0; i < 3; ++i) {
      Point a = p, b = p;
      a[i] += 1e-6;
      b[i] -= 1e-6;
      g[i] = (t.signed_distance(a) - t.signed_distance(b)) / 2e-6;
    }
    CHECK((t.normal(p) - g).norm() < 1e-6);
  }

  TEST_CASE("cylinder segment rim") {
    const CylinderSegment c(1.0, -2.0, 2.0);
    const auto r = c.closest_point(make_point({2, 0, 3}));
    CHECK((r.cp - make_point({1, 0, 2})).norm() < 1e-12);
    CHECK_THROWS_AS(c.signed_distance(make_point({2, 0, 0})), Unsupported);
    CHECK_THROWS_AS(c.normal(make_point({1, 0, 0})), Unsupported);
    // Brute force over side and rim samples.
    RngStream rng(11, 0);
    for (int k = 0; k < 50; ++k) {
      const Point q = make_point({3 * rng.uniform() - 1.5, 3 * rng.uniform() - 1.5, 6 * rng.uniform() - 3});
      double best = 1e300;
      for (int i = 0; i < 720; ++i) {
        const double th = 2 * std::numbers::pi * i / 720;
        for (int j = 0; j <= 400; ++j) {
          const double z = -2 + 4.0 * j / 400;
          best = std::min(best, std::hypot(q[0] - std::cos(th), q[1] - std::sin(th), q[2] - z));
        }
      }
      const auto res = c.closest_point_any(q);
      CHECK(res.dist <= best + 1e-12);
      CHECK(res.dist >= best - 0.02);
    }
  }

  TEST_CASE("ellipsoid") {
    const Ellipsoid e(1.0, 0.8, 0.6);
    CHECK(std::abs(e.signed_distance(make_point({0, 0.8, 0}))) < 1e-10);
    CHECK(std::abs(e.signed_distance(make_point({0.6, 0.64, 0}))) < 1e-10);
    CHECK((e.normal(make_point({1, 0, 0})) - make_point({1, 0, 0})).norm() < 1e-12);
    CHECK(e.signed_distance(make_point({0, 0, 0})) < 0);
    CHECK(e.signed_distance(make_point({2, 0, 0})) == doctest::Approx(1.0));
  }

  TEST_CASE("spherical cap and plane rectangle") {
    const SphericalCap cap(std::numbers::pi / 4, 3 * std::numbers::pi / 4);
    const auto r = cap.closest_point(make_point({0.1, 0, 2}));
    CHECK(r.cp[0] == doctest::Approx(std::sin(std::numbers::pi / 4)));
    CHECK(r.cp[1] == doctest::Approx(0.0));
    CHECK(r.cp[2] == doctest::Approx(std::cos(std::numbers::pi / 4)));
    // On the axis the whole boundary circle is closest.
    CHECK_THROWS_AS(cap.closest_point(make_point({0, 0, 2})), DegenerateQuery);
    CHECK_FALSE(cap.closest_point_any(make_point({0, 0, 2})).unique);
    const PlaneRect plane(make_point({-1, -1}), make_point({1, 1}));
    const auto p = plane.closest_point(make_point({2, 0.5}));
    CHECK((p.cp - make_point({1, 0.5})).norm() == 0);
  }

  TEST_CASE("idempotence and minimality on every surface") {
    std::vector<std::shared_ptr<Surface>> surfaces = {
        std::make_shared<Hypersphere>(3), std::make_shared<Ellipsoid>(1.0, 0.8, 0.6),
        std::make_shared<Torus>(1.25, 0.75), std::make_shared<CylinderSegment>(1.0, -2.0, 2.0),
        std::make_shared<SphericalCap>(0.5, 2.0)};
    RngStream rng(5, 1);
    for (const auto& s : surfaces) {
      CAPTURE(s->name());
      const double band = 0.4;
      double worst = 0;
      for (int k = 0; k < 10000; ++k) {
        const Point x = random_near(*s, rng, band);
        const auto a = s->closest_point_any(x);
        if (!a.unique) continue;
        const auto b = s->closest_point_any(a.cp);
        worst = std::max(worst, (b.cp - a.cp).norm());
      }
      CHECK(worst < 1e-10);
      // Minimality against random surface samples.
      const Point x = random_near(*s, rng, band);
      const double d = s->closest_point_any(x).dist;
      for (int k = 0; k < 1000; ++k) {
        const Point sample = random_near(*s, rng, 0.0);
        CHECK(d <= (x - sample).norm() + 1e-12);
      }
    }
  }

  TEST_CASE("closest point equals x - d grad d on closed surfaces") {
    std::vector<std::shared_ptr<Surface>> surfaces = {std::make_shared<Hypersphere>(3),
                                                      std::make_shared<Ellipsoid>(1.0, 0.8, 0.6),
                                                      std::make_shared<Torus>(1.25, 0.75)};
    RngStream rng(9, 2);
    for (const auto& s : surfaces) {
      CAPTURE(s->name());
      for (int k = 0; k < 200; ++k) {
        const Point x = random_near(*s, rng, 0.2);
        Point g(3);
        for (int i = 0; i < 3; ++i) {
          Point a = x, b = x;
          a[i] += 1e-6;
          b[i] -= 1e-6;
          g[i] = (s->signed_distance(a) - s->signed_distance(b)) / 2e-6;
        }
        const Point rebuilt = x - s->signed_distance(x) * g;
        CHECK((rebuilt - s->closest_point(x).cp).norm() < 1e-5);
      }
    }
  }

  TEST_CASE("hypersphere cp jacobian") {
    SmallMatrix J = cp_jacobian_hypersphere(make_point({1, 0, 0}));
    SmallMatrix expect = SmallMatrix::Zero(3, 3);
    expect(1, 1) = expect(2, 2) = 1;
    CHECK((J - expect).norm() < 1e-15);
    J = cp_jacobian_hypersphere(make_point({0, 0, 2}));
    expect.setZero();
    expect(0, 0) = expect(1, 1) = 0.5;
    CHECK((J - expect).norm() < 1e-15);
    CHECK_THROWS_AS(cp_jacobian_hypersphere(make_point({0, 0, 0})), DegenerateQuery);

    // Finite differences in several dimensions, and J u = 0 for unit u.
    RngStream rng(2, 3);
    for (int n = 2; n <= 6; ++n) {
      const Hypersphere s(n);
      Point u(n);
      for (int i = 0; i < n; ++i) u[i] = rng.normal();
      const SmallMatrix Ja = cp_jacobian_hypersphere(u);
      for (int j = 0; j < n; ++j) {
        Point a = u, b = u;
        a[j] += 1e-6;
        b[j] -= 1e-6;
        const Point col = (s.closest_point(a).cp - s.closest_point(b).cp) / 2e-6;
        CHECK((Ja.col(j) - col).norm() < 1e-6);
      }
      const Point unit = u.normalized();
      CHECK((cp_jacobian_hypersphere(unit) * unit).norm() < 1e-12);
    }
  }

  TEST_CASE("hypersphere cp hessian") {
    SmallMatrix H = cp_hessian_hypersphere(make_point({1, 0, 0}), 0);
    SmallMatrix expect = SmallMatrix::Zero(3, 3);
    expect(1, 1) = expect(2, 2) = -1;
    CHECK((H - expect).norm() < 1e-15);
    H = cp_hessian_hypersphere(make_point({1, 0, 0}), 1);
    expect.setZero();
    expect(0, 1) = expect(1, 0) = -1;
    CHECK((H - expect).norm() < 1e-15);
    // Homogeneity: degree -2.
    for (int i = 0; i < 3; ++i)
      CHECK((cp_hessian_hypersphere(make_point({2, 0, 0}), i) * 4 - cp_hessian_hypersphere(make_point({1, 0, 0}), i))
                .norm() < 1e-14);

    RngStream rng(4, 4);
    for (int n = 2; n <= 5; ++n) {
      const Hypersphere s(n);
      Point u(n);
      for (int i = 0; i < n; ++i) u[i] = rng.normal();
      u = u.normalized() * (0.8 + 0.4 * rng.uniform());
      const double h = 1e-4;
      for (int i = 0; i < n; ++i) {
        const SmallMatrix Ha = cp_hessian_hypersphere(u, i);
        CHECK((Ha - Ha.transpose()).norm() < 1e-14);
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) {
            auto f = [&](double dj, double dk) {
              Point q = u;
              q[j] += dj;
              q[k] += dk;
              return s.closest_point(q).cp[i];
            };
            const double fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
            CHECK(std::abs(Ha(j, k) - fd) < 1e-6);
          }
      }
    }
  }

  TEST_CASE("sphere distance has zero derivative along tangents") {
    RngStream rng(6, 5);
    for (int n = 2; n <= 6; ++n) {
      const Hypersphere s(n);
      Point u(n), v(n);
      for (int i = 0; i < n; ++i) {
        u[i] = rng.normal();
        v[i] = rng.normal();
      }
      u.normalize();
      v -= v.dot(u) * u;
      // grad d_N(u) = u / |u| for the hypersphere; check the directional derivative numerically.
      const double h = 1e-6;
      const double dd = (s.closest_point_any(u + h * v).dist - s.closest_point_any(u - h * v).dist) / (2 * h);
      CHECK(std::abs(dd) < 1e-8);
      CHECK(std::abs(s.normal(u).dot(v)) < 1e-10);
    }
  }
}
