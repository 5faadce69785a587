#include "cpmap/error.hpp"
#include "cpmap/experiments.hpp"
#include "cpmap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace cpmap;

namespace {

Config cfg(const std::string& text) { return Config::parse(text); }

double brute_diameter(const std::vector<Eigen::Vector3d>& p) {
  double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) d = std::max(d, (p[i] - p[j]).norm());
  return d;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("node noise is keyed, scaled and zero without alpha") {
    NoiseSpec n;
    n.alpha = {0.1, 0.2, 0.3};
    const auto a = node_noise(n, 0, {1, 2, 3});
    CHECK(a == node_noise(n, 0, {1, 2, 3}));
    CHECK(a != node_noise(n, 1, {1, 2, 3}));
    CHECK(a != node_noise(n, 0, {1, 2, 4}));
    NoiseSpec unit = n;
    unit.alpha = {1, 1, 1};
    const auto z = node_noise(unit, 0, {1, 2, 3});
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(n.alpha[i] * z[i]));
    NoiseSpec none;
    none.alpha = {0, 0, 0};
    CHECK(node_noise(none, 5, {0, 0, 0}) == std::array<double, 3>{0, 0, 0});
  }

  TEST_CASE("named surfaces") {
    const Config c;
    CHECK(make_surface("sphere", c)->name() == "sphere");
    CHECK(make_surface("torus", c)->name() == "torus");
    CHECK(make_surface("ellipsoid", c)->name() == "ellipsoid");
    CHECK(make_surface("cylinder", c)->name() == "cylinder");
    CHECK(make_surface("cap", c)->name() == "cap");
    try {
      make_surface("klein", c);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.key() == "surface");
    }
    CHECK(surface_area(*make_surface("sphere", c)) == doctest::Approx(4 * std::numbers::pi));
    CHECK(surface_area(Ellipsoid(1, 1, 1)) == doctest::Approx(4 * std::numbers::pi).epsilon(1e-4));
    // The cap between polar angles acos(+-2/sqrt5) has the cylinder's height projection.
    CHECK(surface_area(*make_surface("cap", c)) == doctest::Approx(2 * std::numbers::pi * 4 / std::sqrt(5.0)));
  }

  TEST_CASE("band size estimate is close to the built band") {
    const Hypersphere s(3);
    const Band b = build_band(s, 0.1);
    std::size_t core = 0;
    for (auto c : b.core) core += c;
    const double est = static_cast<double>(estimate_band_nodes(s, 0.1));
    CHECK(std::abs(est - core) < 0.1 * core);
  }

  TEST_CASE("inverse stereographic chart lands on the sphere") {
    CHECK((inverse_stereographic(0, 0) - Eigen::Vector3d(0, 0, 1)).norm() == 0);
    CHECK((inverse_stereographic(1, 0) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);
    RngStream rng(2, 2);
    for (int k = 0; k < 100; ++k) CHECK(inverse_stereographic(rng.normal(), rng.normal()).norm() == doctest::Approx(1.0));
  }

  TEST_CASE("zero-noise identity control stays within O(dx^2)") {
    auto p = IdentityStudyParams::from_config(cfg("dx = 0.2, 0.1\nrealizations = 1\nalpha = 0\n"));
    const auto rep = identity_map_study(p);
    REQUIRE(rep.rows.size() == 2);
    for (const auto& r : rep.rows) CHECK(r.error <= 10 * r.dx * r.dx);
    CHECK(std::isnan(rep.rows[0].rate));
    CHECK(rep.realizations == 1);
    CHECK(rep.seeds == std::vector<std::uint64_t>{1});
  }

  TEST_CASE("identity study is deterministic and fills both methods") {
    auto p = IdentityStudyParams::from_config(cfg("dx = 0.25\nrealizations = 2\nmethod = both\n"));
    const auto a = identity_map_study(p), b = identity_map_study(p);
    REQUIRE(a.rows.size() == 2);
    CHECK(a.rows[0].method == "CPM");
    CHECK(a.rows[1].method == "LSM");
    for (std::size_t i = 0; i < 2; ++i) CHECK(a.rows[i].error == b.rows[i].error);
    CHECK(a.rows[0].speedup > 0);
    CHECK(std::isnan(a.rows[1].speedup));
  }

  TEST_CASE("plane to sphere: a run against itself has zero error") {
    auto p = PlaneSphereParams::from_config(cfg("dx = 0.2\ndx_ref = 0.2\nrealizations = 1\n"));
    const auto rep = plane_to_sphere_study(p);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].error == 0);
  }

  TEST_CASE("plane to sphere noise is shared across resolutions") {
    NoiseSpec n;
    const Field fine = solve_plane_sphere(0.1, 0.05, 0, 0.1, n, 3);
    const Field coarse = solve_plane_sphere(0.2, 0.05, 0, 0.1, n, 3);
    // With t_final = 0 the solution is the noisy initial map; nodes shared by
    // both grids carry the same noise.
    const int nf = 21, nc = 11;
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) CHECK((coarse.row(i * nc + j) - fine.row(2 * i * nf + 2 * j)).norm() == 0);
  }

  TEST_CASE("texture: zero noise and zero steps reproduce the base map") {
    auto p = TextureParams::from_config(cfg("dx = 0.1\nsteps = 0\nalpha = 0\n"));
    const auto res = texture_denoise(p);
    CHECK(res.final == res.w);
    CHECK(res.initial == res.w);
    for (Eigen::Index r = 0; r < res.w.rows(); ++r) CHECK(res.w.row(r).norm() == doctest::Approx(1.0));
  }

  TEST_CASE("texture: plane to sphere displacement from the clean flow decreases") {
    auto p = TextureParams::from_config(cfg("dx = 0.05\nsteps = 60\nstats_every = 10\n"));
    const auto res = texture_denoise(p);
    REQUIRE(res.reference_displacement.size() == 7);
    CHECK(res.reference_displacement.front() == res.mean_displacement.front());
    for (std::size_t i = 1; i < res.reference_displacement.size(); ++i)
      CHECK(res.reference_displacement[i] < res.reference_displacement[i - 1]);
    // Distance from w itself drops with the noise, then the chart drifts at the edges.
    CHECK(res.mean_displacement[1] < 0.5 * res.mean_displacement[0]);
    CHECK(res.max_manifold_distance <= 1e-10);
  }

  TEST_CASE("texture: without noise the clean flow is the flow") {
    auto p = TextureParams::from_config(cfg("dx = 0.1\nsteps = 10\nalpha = 0\nstats_every = 5\n"));
    const auto res = texture_denoise(p);
    for (double d : res.reference_displacement) CHECK(d < 1e-9);
    CHECK(res.mean_displacement.back() > 0);
  }

  TEST_CASE("texture: cylinder to cap stays inside the cap") {
    auto p = TextureParams::from_config(cfg("source = cylinder\ntarget = cap\ndx = 0.1\nsteps = 20\nalpha = 0.075\n"));
    const auto out = std::filesystem::temp_directory_path() / "cpmap_texture_cap";
    std::filesystem::remove_all(out);
    p.out = out;
    const auto res = texture_denoise(p);
    CHECK(res.max_cap_violation <= 1e-12);
    CHECK(res.max_manifold_distance <= 1e-10);
    CHECK(res.outputs.size() == 3);
    for (const auto& f : res.outputs) CHECK(std::filesystem::exists(f));
  }

  TEST_CASE("texture: mesh target through the local search") {
    auto p = TextureParams::from_config(cfg("target = mesh\ndx = 0.1\nsteps = 3\n"));
    const auto res = texture_denoise(p);
    CHECK(res.mesh_queries > 0);
    CHECK(res.max_manifold_distance <= 1e-10);
  }

  TEST_CASE("texture rejects unsupported pairs") {
    CHECK_THROWS_AS(TextureParams::from_config(cfg("dx = 0.1\nsource = cylinder\ntarget = mesh\n")), ValidationError);
  }

  TEST_CASE("diameter matches brute force") {
    RngStream rng(10, 0);
    for (int n : {0, 1, 2, 50, 400}) {
      std::vector<Eigen::Vector3d> pts(n);
      for (auto& q : pts) q = Eigen::Vector3d(rng.normal(), 0.3 * rng.normal(), rng.uniform());
      if (n > 10) pts[3] = pts[7];
      CHECK(point_set_diameter(pts) == brute_diameter(pts));
    }
  }

  TEST_CASE("random map: single seed and neighbour is constant from step 0") {
    auto p = RandomMapParams::from_config(cfg("dx = 0.2\nseed_vertices = 1\nneighbours = 1\nsteps = 10\n"));
    const auto res = random_map_study(p);
    CHECK(res.pool.size() == 1);
    CHECK(res.initial_diameter == 0);
    CHECK(res.final_diameter == 0);
    CHECK(res.steps == 0);
  }

  TEST_CASE("random map: initial images come from the neighbour pool") {
    auto p = RandomMapParams::from_config(cfg("dx = 0.2\nsteps = 4\ncheck_every = 2\nstop_ratio = 0\n"));
    const auto res = random_map_study(p);
    CHECK(res.seed_vertex.size() == 16);
    CHECK(res.initial_in_pool);
    CHECK(res.pool.size() >= 240);
    CHECK(res.pool.size() <= 16 * 240);
    CHECK(std::is_sorted(res.pool.begin(), res.pool.end()));
    CHECK(res.steps == 4);
    REQUIRE(res.diameter.size() == 3);
    CHECK(res.diameter[2].second <= res.diameter[0].second);
  }

  TEST_CASE("chroma: zero noise leaves the image unchanged") {
    ChromaParams p;
    p.noise_fraction = 0;
    const Image clean = make_three_band_image(30);
    const auto prob = make_chroma_problem(clean, p);
    CHECK(prob.noisy_chroma == prob.clean_chroma);
    const Field u = chroma_flow(prob, "isotropic", 0, 0, 1e-16);
    CHECK(compose_image(prob, u) == clean);
    const auto m = chroma_error(prob, u);
    CHECK(m.mean == 0);
    CHECK(m.edge == 0);
  }

  TEST_CASE("chroma: edge zone and zero-intensity pixels") {
    ChromaParams p;
    Image img = make_three_band_image(30);
    std::size_t edge = 0;
    for (auto e : make_chroma_problem(img, p).edge) edge += e;
    // Colour boundaries between columns 9|10 and 19|20, widened by two pixels.
    CHECK(edge == 2 * 6 * 30);
    img.at(25, 5)[2] = 0;  // a black pixel inside the blue band
    const auto prob = make_chroma_problem(img, p);
    CHECK(prob.edge[prob.shape.row(27, 7)]);
    CHECK(!prob.edge[prob.shape.row(28, 8)]);
    const int r = prob.shape.row(25, 5);
    CHECK(!prob.valid[r]);
    CHECK(prob.clean_chroma.row(r).isApprox(Eigen::RowVector3d::Ones() / std::sqrt(3.0)));
  }

  TEST_CASE("chroma: noise hits about the requested fraction") {
    ChromaParams p;
    const auto prob = make_chroma_problem(make_three_band_image(128), p);
    std::size_t changed = 0;
    for (Eigen::Index r = 0; r < prob.noisy_chroma.rows(); ++r)
      changed += (prob.noisy_chroma.row(r) - prob.clean_chroma.row(r)).norm() > 0;
    const double frac = static_cast<double>(changed) / prob.noisy_chroma.rows();
    // One primary in three equals the pixel's own colour.
    CHECK(frac == doctest::Approx(0.05 * 2 / 3).epsilon(0.15));
    const auto again = make_chroma_problem(make_three_band_image(128), p);
    CHECK(again.noisy_chroma == prob.noisy_chroma);
  }

  TEST_CASE("chroma flows keep unit chroma; isotropic smooths the interior") {
    ChromaParams p;
    const auto prob = make_chroma_problem(make_three_band_image(48), p);
    const auto noisy = chroma_error(prob, prob.noisy_chroma);
    for (const char* mode : {"isotropic", "anisotropic"}) {
      const Field u = chroma_flow(prob, mode, 10, 0, 1e-16);
      for (Eigen::Index r = 0; r < u.rows(); ++r) CHECK(u.row(r).norm() == doctest::Approx(1.0));
    }
    // Heat flow spreads each outlier, so the interior error falls in the early steps.
    std::vector<double> interior{noisy.interior};
    chroma_flow(prob, "isotropic", 8, 0, 1e-16,
                [&](long, const Field& u) { interior.push_back(chroma_error(prob, u).interior); });
    for (std::size_t k = 1; k < interior.size(); ++k) CHECK(interior[k] < interior[k - 1]);
    CHECK_THROWS_AS(chroma_flow(prob, "median", 1, 0, 1e-16), ValidationError);
  }

  TEST_CASE("pixel size rescales the chroma grid") {
    ChromaParams p;
    p.pixel_size = 0.25;
    const auto prob = make_chroma_problem(make_three_band_image(12), p);
    CHECK(prob.shape.dx == 0.25);
    const Field u = chroma_flow(prob, "anisotropic", 2, 0, 1e-16);
    CHECK(u.rows() == 144);
  }
}
