#include "cpmap/band.hpp"
#include "cpmap/error.hpp"
#include "cpmap/kernels.hpp"
#include "cpmap/planar.hpp"
#include "cpmap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace cpmap;

TEST_SUITE("band") {
  TEST_CASE("band radius formula") {
    CHECK(band_radius_factor(3, 3) == doctest::Approx(std::sqrt(17.0)));
    CHECK(band_radius_factor(2, 3) == doctest::Approx(std::sqrt(13.0)));
    CHECK(band_radius_factor(3, 1) == doctest::Approx(std::sqrt(6.0)));
    const Hypersphere s(3);
    const Band b = build_band(s, 0.1);
    CHECK(b.lambda_c == doctest::Approx(std::sqrt(17.0) * 0.1));
    CHECK(b.radius == b.lambda_c);
  }

  TEST_CASE("sphere core node count matches the shell volume") {
    const Hypersphere s(3);
    for (double dx : {0.1, 0.05}) {
      const Band b = build_band(s, dx);
      std::size_t core = 0;
      for (auto c : b.core) core += c;
      const double lam = b.lambda_c;
      const double shell = 4.0 / 3.0 * std::numbers::pi * (std::pow(1 + lam, 3) - std::pow(1 - lam, 3));
      CAPTURE(dx);
      CHECK(std::abs(core - shell / (dx * dx * dx)) < 0.05 * shell / (dx * dx * dx));
      for (std::size_t r = 0; r < b.size(); ++r) {
        if (b.core[r]) CHECK(b.dist[r] <= b.radius + 1e-12);
        CHECK((b.x[r] - (b.origin + dx * Eigen::Vector3d(b.index[r][0], b.index[r][1], b.index[r][2]))).norm() <
              1e-12);
      }
    }
  }

  TEST_CASE("lookup round trip") {
    const Torus t(1.25, 0.75);
    const Band b = build_band(t, 0.2);
    for (std::size_t r = 0; r < b.size(); ++r) CHECK(b.find(b.index[r]) == static_cast<int>(r));
    CHECK(b.find(1000, 0, 0) == -1);
  }

  TEST_CASE("lagrange weights reproduce cubics and sum to one") {
    double w[4];
    for (double t : {0.0, 0.3, 1.0, 1.7, 3.0}) {
      lagrange_weights(3, t, w);
      double s = 0, cub = 0;
      for (int i = 0; i < 4; ++i) {
        s += w[i];
        cub += w[i] * i * i * i;
      }
      CHECK(s == doctest::Approx(1.0));
      CHECK(cub == doctest::Approx(t * t * t));
    }
    lagrange_weights(3, 2.0, w);
    CHECK(w[2] == 1.0);
    CHECK(w[0] == 0.0);
  }

  TEST_CASE("extension is exact for degree-3 polynomials") {
    const Hypersphere s(3);
    const Band b = build_band(s, 0.1);
    const SparseOperator E = assemble_extension(b);
    CHECK(E.rows == b.size());
    // Only tensor-product cubics are reproduced exactly; use per-axis degree <= 3.
    auto f = [](const Eigen::Vector3d& x) {
      return 1 + 2 * x[0] - x[1] + x[0] * x[1] * x[2] - 3 * x[2] * x[2] + x[0] * x[0] * x[0] +
             0.2 * x[1] * x[1] * x[2] * x[0] * x[0] * x[0];
    };
    Field u(static_cast<Eigen::Index>(b.size()), 1);
    for (std::size_t r = 0; r < b.size(); ++r) u(r, 0) = f(b.x[r]);
    Field v;
    spmv(E, u, v);
    double worst = 0;
    for (std::size_t r = 0; r < b.size(); ++r) {
      if (!b.core[r]) continue;
      worst = std::max(worst, std::abs(v(r, 0) - f(b.cp[r])));
      double sum = 0;
      for (auto k = E.row_ptr[r]; k < E.row_ptr[r + 1]; ++k) sum += E.val[k];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(E.row_ptr[r + 1] - E.row_ptr[r] <= 64);
    }
    CHECK(worst < 1e-11);
  }

  TEST_CASE("extension of a quartic shows the interpolation error") {
    // Degree 4 is outside the exact space; the error must still be O(dx^4).
    const Hypersphere s(3);
    double prev = 0;
    for (double dx : {0.2, 0.1}) {
      const Band b = build_band(s, dx);
      const SparseOperator E = assemble_extension(b);
      Field u(static_cast<Eigen::Index>(b.size()), 1);
      for (std::size_t r = 0; r < b.size(); ++r) u(r, 0) = std::pow(b.x[r][0], 4);
      Field v;
      spmv(E, u, v);
      double worst = 0;
      for (std::size_t r = 0; r < b.size(); ++r)
        if (b.core[r]) worst = std::max(worst, std::abs(v(r, 0) - std::pow(b.cp[r][0], 4)));
      CHECK(worst > 0);
      if (prev > 0) CHECK(std::log2(prev / worst) > 3.5);
      prev = worst;
    }
  }

  TEST_CASE("laplacian is exact on quadratics and empty on ring rows") {
    const Hypersphere s(3);
    const Band b = build_band(s, 0.1);
    const SparseOperator L = assemble_laplacian(b);
    Field u(static_cast<Eigen::Index>(b.size()), 1);
    for (std::size_t r = 0; r < b.size(); ++r) u(r, 0) = b.x[r].squaredNorm() + 3 * b.x[r][0] * b.x[r][1];
    Field v;
    spmv(L, u, v);
    std::size_t ring = 0;
    for (std::size_t r = 0; r < b.size(); ++r) {
      if (b.core[r]) {
        CHECK(v(r, 0) == doctest::Approx(6.0).epsilon(1e-9));
      } else {
        CHECK(L.row_ptr[r] == L.row_ptr[r + 1]);
        ++ring;
      }
    }
    CHECK(ring > 0);
    BandOptions no_ring;
    no_ring.laplacian_ring = false;
    CHECK_THROWS_AS(assemble_laplacian(build_band(s, 0.1, no_ring)), MissingStencilNode);
  }

  TEST_CASE("planar laplacian fourier symbol") {
    const PlaneRect plane(make_point({0, 0}), make_point({1, 1}));
    const Band b = build_band(plane, 1.0 / 32);
    const PlanarShape g = planar_shape(b);
    const SparseOperator L = assemble_planar_laplacian(g, PlanarBoundary::Dirichlet);
    const double dx = g.dx;
    for (int k : {1, 3, 7}) {
      const double w = k * std::numbers::pi;
      Field u(static_cast<Eigen::Index>(b.size()), 1);
      for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) u(g.row(i, j), 0) = std::sin(w * i * dx) * std::sin(w * j * dx);
      Field v;
      spmv(L, u, v);
      const double symbol = -8 * std::pow(std::sin(w * dx / 2), 2) / (dx * dx);
      for (int i = 1; i < g.nx - 1; ++i)
        for (int j = 1; j < g.ny - 1; ++j) CHECK(v(g.row(i, j), 0) == doctest::Approx(symbol * u(g.row(i, j), 0)).epsilon(1e-9));
    }
  }

  TEST_CASE("planar neumann laplacian annihilates constants and mirrors the edge") {
    const PlaneRect plane(make_point({0, 0}), make_point({1, 0.5}));
    const Band b = build_band(plane, 0.125);
    const PlanarShape g = planar_shape(b);
    CHECK(g.nx == 9);
    CHECK(g.ny == 5);
    const SparseOperator L = assemble_planar_laplacian(g, PlanarBoundary::Neumann);
    Field one = Field::Ones(static_cast<Eigen::Index>(b.size()), 1), v;
    spmv(L, one, v);
    CHECK(v.cwiseAbs().maxCoeff() < 1e-12);
    // u = x: the mirrored ghost gives u_{-1} = u_1, so the corner row sees 2(u_1 - u_0)/dx^2.
    Field x(static_cast<Eigen::Index>(b.size()), 1);
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.ny; ++j) x(g.row(i, j), 0) = i * g.dx;
    spmv(L, x, v);
    CHECK(v(g.row(0, 2), 0) == doctest::Approx(2 * g.dx / (g.dx * g.dx)));
    CHECK(v(g.row(4, 2), 0) == doctest::Approx(0.0));
  }

  TEST_CASE("one-sided gradients are exact on linear functions") {
    const Torus t(1.25, 0.75);
    const Band b = build_band(t, 0.1);
    const auto grads = assemble_gradients(b, true);
    REQUIRE(grads.size() == 3);
    Field u(static_cast<Eigen::Index>(b.size()), 1);
    for (std::size_t r = 0; r < b.size(); ++r) u(r, 0) = 2 * b.x[r][0] - 3 * b.x[r][1] + 0.5 * b.x[r][2];
    const double slope[3] = {2, -3, 0.5};
    for (int a = 0; a < 3; ++a) {
      Field f, bk;
      spmv(grads[a].forward, u, f);
      spmv(grads[a].backward, u, bk);
      for (std::size_t r = 0; r < b.size(); ++r) {
        if (grads[a].forward.row_ptr[r] != grads[a].forward.row_ptr[r + 1])
          CHECK(f(r, 0) == doctest::Approx(slope[a]).epsilon(1e-9));
        if (grads[a].backward.row_ptr[r] != grads[a].backward.row_ptr[r + 1])
          CHECK(bk(r, 0) == doctest::Approx(slope[a]).epsilon(1e-9));
      }
    }
    BandOptions no_ring;
    no_ring.laplacian_ring = false;
    CHECK_THROWS_AS(assemble_gradients(build_band(t, 0.1, no_ring), false), MissingStencilNode);
  }

  TEST_CASE("near-surface rows are core rows within lambda_c") {
    const Hypersphere s(3);
    BandOptions wide;
    wide.radius_factor = 3;
    wide.laplacian_ring = false;
    const Band b = build_band(s, 0.1, wide);
    CHECK(b.radius == doctest::Approx(3 * b.lambda_c));
    for (int r : b.near_surface()) {
      CHECK(b.core[r]);
      CHECK(b.dist[r] <= b.lambda_c + 1e-12);
    }
  }

  TEST_CASE("band dump writes one line per node") {
    const Hypersphere s(3);
    const Band b = build_band(s, 0.25);
    const auto path = std::filesystem::temp_directory_path() / "cpmap_band_dump.csv";
    dump_band_csv(b, path);
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    std::getline(in, line);
    CHECK(line == "id,i,j,k,x,y,z,cpx,cpy,cpz,dist,core");
    while (std::getline(in, line)) ++n;
    CHECK(n == b.size());
  }

  TEST_CASE("parallel kernels equal their serial references bitwise") {
    const Hypersphere s(3);
    auto b = build_band(s, 0.1);
    const SparseOperator E = assemble_extension(b), L = assemble_laplacian(b);
    RngStream rng(4, 4);
    Field u(static_cast<Eigen::Index>(b.size()), 3);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
    Field a, c;
    spmv(E, u, a);
    spmv_serial(E, u, c);
    CHECK(a == c);
    euler_update(L, u, 0.001, a);
    euler_update_serial(L, u, 0.001, c);
    CHECK(a == c);
    const auto oa = project_rows(s, u, a);
    const auto oc = project_rows_serial(s, u, c);
    CHECK(a == c);
    CHECK(oa.failed_row == kNoFailure);
    CHECK(oc.failed_row == kNoFailure);
    u.row(17).setZero();
    u(5, 0) = std::nan("");
    const auto fa = project_rows(s, u, a);
    CHECK(fa.failed_row == 5);
    CHECK(fa.nonfinite);
    CHECK_THROWS_AS(raise_projection_failure(fa, "test"), SolverError);
  }
}
