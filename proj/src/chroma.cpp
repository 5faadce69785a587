#include "cpmap/error.hpp"
#include "cpmap/experiments.hpp"
#include "cpmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpmap {

namespace {

constexpr std::uint64_t kChromaTag = 0x6368726f6dULL;

PlanarShape image_shape(const Image& img, double dx) {
  PlanarShape g;
  g.nx = img.width;
  g.ny = img.height;
  g.dx = dx;
  return g;
}

double angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

}  // namespace

ChromaParams ChromaParams::from_config(const Config& cfg) {
  ChromaParams p;
  p.mode = cfg.str("mode", "isotropic");
  if (p.mode != "isotropic" && p.mode != "anisotropic")
    throw ValidationError("mode", "mode must be isotropic or anisotropic");
  p.steps = cfg.integer("steps", p.mode == "isotropic" ? 30 : 125);
  if (p.steps < 0) throw ValidationError("steps", "steps must be >= 0");
  p.noise_fraction = cfg.real("noise_fraction", 0.05);
  if (!(p.noise_fraction >= 0 && p.noise_fraction <= 1))
    throw ValidationError("noise_fraction", "noise_fraction must lie in [0, 1]");
  p.seed = cfg.u64("seed", 1);
  p.dt_factor = cfg.real("dt_factor", 0);
  p.delta = cfg.real("delta", 1e-16);
  const long hw = cfg.integer("edge_width", 2);
  if (hw < 0) throw ValidationError("edge_width", "edge_width must be >= 0");
  p.edge_halfwidth = static_cast<int>(hw);
  const long size = cfg.integer("size", 256);
  if (size < 3) throw ValidationError("size", "size must be >= 3");
  p.size = static_cast<int>(size);
  p.pixel_size = cfg.real("pixel_size", 1.0);
  if (!(p.pixel_size > 0)) throw ValidationError("pixel_size", "pixel_size must be positive");
  if (cfg.has("image")) p.image = cfg.str("image");
  return p;
}

Image make_three_band_image(int size) {
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int band = 3 * x / size;
      img.at(x, y)[band] = 200;
    }
  return img;
}

ChromaProblem make_chroma_problem(const Image& clean, const ChromaParams& p) {
  ChromaProblem prob;
  prob.clean = clean;
  prob.shape = image_shape(clean, p.pixel_size);
  const auto& g = prob.shape;
  const std::size_t n = static_cast<std::size_t>(g.nx) * g.ny;
  prob.clean_chroma.resize(static_cast<Eigen::Index>(n), 3);
  prob.intensity.assign(n, 0);
  prob.valid.assign(n, 0);
  const Eigen::Vector3d grey = Eigen::Vector3d::Ones() / std::sqrt(3.0);
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      const auto* px = clean.at(x, y);
      const Eigen::Vector3d c(px[0], px[1], px[2]);
      const int r = g.row(x, y);
      prob.intensity[r] = c.norm();
      prob.valid[r] = prob.intensity[r] > 0;
      prob.clean_chroma.row(r) = (prob.valid[r] ? Eigen::Vector3d(c / prob.intensity[r]) : grey).transpose();
    }

  // Salt and pepper: a pixel's chroma is replaced by a primary direction.
  prob.noisy_chroma = prob.clean_chroma;
  if (p.noise_fraction > 0)
    for (int x = 0; x < g.nx; ++x)
      for (int y = 0; y < g.ny; ++y) {
        RngStream rng(p.seed, mix_stream_id(kChromaTag, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y)));
        if (rng.uniform() >= p.noise_fraction) continue;
        const int r = g.row(x, y);
        if (!prob.valid[r]) continue;
        prob.noisy_chroma.row(r).setZero();
        prob.noisy_chroma(r, rng.next_u32() % 3) = 1.0;
      }

  // Edge zone: pixels within the half-width (Chebyshev) of a colour boundary.
  std::vector<std::uint8_t> boundary(n, 0);
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      const auto c = prob.clean_chroma.row(g.row(x, y));
      if ((x + 1 < g.nx && (prob.clean_chroma.row(g.row(x + 1, y)) - c).norm() > 1e-9) ||
          (x > 0 && (prob.clean_chroma.row(g.row(x - 1, y)) - c).norm() > 1e-9) ||
          (y + 1 < g.ny && (prob.clean_chroma.row(g.row(x, y + 1)) - c).norm() > 1e-9) ||
          (y > 0 && (prob.clean_chroma.row(g.row(x, y - 1)) - c).norm() > 1e-9))
        boundary[g.row(x, y)] = 1;
    }
  prob.edge.assign(n, 0);
  const int hw = p.edge_halfwidth;
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      if (!boundary[g.row(x, y)]) continue;
      for (int i = std::max(0, x - hw); i <= std::min(g.nx - 1, x + hw); ++i)
        for (int j = std::max(0, y - hw); j <= std::min(g.ny - 1, y + hw); ++j) prob.edge[g.row(i, j)] = 1;
    }
  return prob;
}

ChromaMetrics chroma_error(const ChromaProblem& prob, const Field& u) {
  double all = 0, edge = 0, interior = 0;
  std::size_t na = 0, ne = 0, ni = 0;
  for (std::size_t r = 0; r < prob.valid.size(); ++r) {
    if (!prob.valid[r]) continue;
    const double a = angle(u.row(r).transpose().normalized(), prob.clean_chroma.row(r).transpose());
    all += a;
    ++na;
    if (prob.edge[r]) {
      edge += a;
      ++ne;
    } else {
      interior += a;
      ++ni;
    }
  }
  ChromaMetrics m;
  m.mean = na ? all / na : 0;
  m.edge = ne ? edge / ne : 0;
  m.interior = ni ? interior / ni : 0;
  return m;
}

Field chroma_flow(const ChromaProblem& prob, const std::string& mode, long steps, double dt_factor, double delta,
                  const std::function<void(long, const Field&)>& observer, std::ostream* log) {
  const auto& g = prob.shape;
  const PlaneRect rect(make_point({0, 0}), make_point({g.dx * (g.nx - 1), g.dx * (g.ny - 1)}));
  auto band = std::make_shared<const Band>(build_band(rect, g.dx));
  auto disc = std::make_shared<const Discretization>(Discretization::on_plane(band, PlanarBoundary::Neumann));
  FlowSpec spec;
  if (mode == "isotropic") {
    spec.kind = FlowSpec::Kind::Harmonic;
    spec.dt_factor = dt_factor > 0 ? dt_factor : 0.1;
  } else if (mode == "anisotropic") {
    spec.kind = FlowSpec::Kind::AnisotropicPlane;
    spec.dt_factor = dt_factor > 0 ? dt_factor : 0.5;
    spec.delta = delta;
  } else {
    throw ValidationError("mode", "mode must be isotropic or anisotropic");
  }
  CpmSolver solver(disc, std::make_shared<Hypersphere>(3), spec);
  MapField u{prob.noisy_chroma, nullptr, 0.0};
  RunOptions opt;
  opt.steps = steps;
  opt.log = log;
  if (observer) opt.observer = [&](long k, const MapField& m) { observer(k, m.values); };
  run_cpm(solver, u, opt);
  return u.values;
}

Image compose_image(const ChromaProblem& prob, const Field& u) {
  const auto& g = prob.shape;
  Image out(g.nx, g.ny);
  for (int x = 0; x < g.nx; ++x)
    for (int y = 0; y < g.ny; ++y) {
      const int r = g.row(x, y);
      auto* px = out.at(x, y);
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(prob.intensity[r] * u(r, c)), 0L, 255L));
    }
  return out;
}

ChromaComparison chroma_compare(const ChromaProblem& prob, long iso_steps, long aniso_steps, long max_scan,
                                double delta) {
  ChromaComparison c;
  c.noisy = chroma_error(prob, prob.noisy_chroma);
  c.anisotropic = chroma_error(prob, chroma_flow(prob, "anisotropic", aniso_steps, 0, delta));

  // One isotropic run covers both the fixed step count and the scan.
  std::vector<ChromaMetrics> trace{c.noisy};
  chroma_flow(prob, "isotropic", std::max(iso_steps, max_scan), 0, delta,
              [&](long, const Field& u) { trace.push_back(chroma_error(prob, u)); });
  c.isotropic = trace[std::min<std::size_t>(iso_steps, trace.size() - 1)];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= static_cast<std::size_t>(max_scan) && k < trace.size(); ++k) {
    const double gap = std::abs(trace[k].interior - c.anisotropic.interior);
    if (gap < best) {
      best = gap;
      c.matched_isotropic_steps = static_cast<long>(k);
    }
  }
  c.isotropic_matched = trace[c.matched_isotropic_steps];
  return c;
}

}  // namespace cpmap
