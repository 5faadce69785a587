// cpmap: closest point method for manifold mapping, experiment driver.
//
// Exit codes: 0 success, 1 probe below threshold, 2 configuration error,
// 3 numerical failure, 4 I/O error. Failures print one line on stderr:
//   error code=<n> kind=<Kind> [key=<key>] [node=<id>] message="<text>"

#include "cpmap/band.hpp"
#include "cpmap/config.hpp"
#include "cpmap/error.hpp"
#include "cpmap/experiments.hpp"
#include "cpmap/io.hpp"
#include "cpmap/solver.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace cpmap;

namespace {

const std::map<std::string, std::vector<std::string>> kKeys = {
    {"converge",
     {"surface", "dx", "method", "realizations", "t_final", "dt_factor", "alpha", "seed", "degree", "lsm.band_factor",
      "lsm.reextension_interval", "ellipsoid.axes", "torus.R", "torus.r"}},
    {"plane-sphere", {"dx", "dx_ref", "realizations", "t_final", "dt_factor", "alpha", "seed"}},
    {"texture",
     {"source", "target", "dx", "steps", "alpha", "seed", "image", "mesh", "mesh.scale", "mesh.offset", "plane.scale",
      "grid.spacing", "grid.radius", "stats_every"}},
    {"random-map",
     {"dx", "steps", "check_every", "stop_ratio", "seed_vertices", "neighbours", "seed", "torus.R", "torus.r", "mesh",
      "mesh.scale", "mesh.offset", "grid.spacing", "grid.radius", "snapshots"}},
    {"chroma", {"mode", "steps", "noise_fraction", "seed", "dt_factor", "delta", "edge_width", "size", "pixel_size", "image"}},
    {"probe", {"surface", "dx", "dt_factor", "h", "perturbation", "degree", "ellipsoid.axes", "torus.R", "torus.r"}},
    {"dump-band", {"surface", "dx", "degree", "band_factor", "ellipsoid.axes", "torus.R", "torus.r"}},
};

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  int threads = 0;
  bool dry_run = false;
  std::string log;
  std::string dump_band;
};

std::string quote(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

int fail(int code, const std::string& kind, const std::string& message, const std::string& extra = "") {
  std::cerr << "error code=" << code << " kind=" << kind << extra << " message=\"" << quote(message) << "\"\n";
  return code;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Approximate resident bytes of a CPM discretization on `nodes` nodes.
double estimate_bytes(std::size_t nodes, int dim, int degree, bool gradients) {
  const double ext = std::pow(degree + 1, dim) * 12.0;
  const double lap = (2 * dim + 1) * 12.0;
  const double grad = gradients ? 2 * dim * 2 * 12.0 : 0;
  const double record = 3 * 24 + 12 + 8 + 1 + 16;  // x, cp, index, dist, core, lookup
  const double fields = 6 * 24.0;
  return nodes * (ext + lap + grad + record + fields);
}

std::string mib(double bytes) { return fmt(bytes / (1024.0 * 1024.0)) + " MiB"; }

class Runner {
 public:
  Runner(std::string command, Config cfg, Options opt) : cmd_(std::move(command)), cfg_(std::move(cfg)), opt_(std::move(opt)) {
    out_ = opt_.out.empty() ? fs::path("out") / cmd_ : fs::path(opt_.out);
    if (!opt_.log.empty() && !opt_.dry_run) {
      log_file_.open(opt_.log);
      if (!log_file_) throw IoError("cannot open log file " + opt_.log);
    }
  }

  int run() {
    if (cmd_ == "converge") return converge();
    if (cmd_ == "plane-sphere") return plane_sphere();
    if (cmd_ == "texture") return texture();
    if (cmd_ == "random-map") return random_map();
    if (cmd_ == "chroma") return chroma();
    if (cmd_ == "probe") return probe();
    if (cmd_ == "dump-band") return dump_band();
    throw ValidationError("command", "unknown command " + cmd_);
  }

 private:
  std::ostream* progress() { return log_file_.is_open() ? &log_file_ : nullptr; }

  void plan_header() {
    std::cout << "plan command=" << cmd_ << "\n";
    std::istringstream lines(cfg_.dump());
    for (std::string line; std::getline(lines, line);) std::cout << "  " << line << "\n";
  }

  void maybe_dump_band(const Surface& s, double dx, const BandOptions& bo = {}) {
    if (opt_.dump_band.empty() || opt_.dry_run) return;
    dump_band_csv(build_band(s, dx, bo), opt_.dump_band);
  }

  void report(const ExperimentReport& rep, const fs::path& csv) {
    std::cout << format_csv(rep);
    for (const auto& n : rep.notes) std::cout << "note " << n << "\n";
    fs::create_directories(csv.parent_path());
    write_csv(rep, csv);
    std::cout << "wrote " << csv.string() << "\n";
  }

  int converge() {
    auto p = IdentityStudyParams::from_config(cfg_);
    if (opt_.dry_run) {
      plan_header();
      const auto surf = make_surface(p.surface, cfg_);
      for (double dx : p.dx) {
        const long steps = steps_for(p.t_final, p.dt_factor * dx * dx);
        if (p.run_cpm) {
          const auto n = estimate_band_nodes(*surf, dx, {p.degree, 1.0, true});
          std::cout << "  dx=" << fmt(dx) << " method=CPM nodes~" << n << " steps=" << steps
                    << " realizations=" << p.realizations << " memory~" << mib(estimate_bytes(n, 3, p.degree, true)) << "\n";
        }
        if (p.run_lsm) {
          const auto n = estimate_band_nodes(*surf, dx, {p.degree, p.lsm.band_factor, false});
          std::cout << "  dx=" << fmt(dx) << " method=LSM nodes~" << n << " steps=" << steps
                    << " realizations=" << p.realizations << " memory~" << mib(estimate_bytes(n, 3, p.degree, true)) << "\n";
        }
      }
      return 0;
    }
    maybe_dump_band(*make_surface(p.surface, cfg_), p.dx.front());
    p.progress = progress();
    report(identity_map_study(p), out_ / "report.csv");
    return 0;
  }

  int plane_sphere() {
    auto p = PlaneSphereParams::from_config(cfg_);
    if (opt_.dry_run) {
      plan_header();
      auto line = [&](const char* what, double dx) {
        const std::size_t n = static_cast<std::size_t>(std::lround(2 / dx) + 1) * (std::lround(2 / dx) + 1);
        std::cout << "  " << what << " dx=" << fmt(dx) << " nodes=" << n
                  << " steps=" << steps_for(p.t_final, p.dt_factor * dx * dx) << " realizations=" << p.realizations
                  << " memory~" << mib(estimate_bytes(n, 2, 0, true)) << "\n";
      };
      for (double dx : p.dx) line("solve", dx);
      line("reference", p.dx_ref);
      return 0;
    }
    p.progress = progress();
    report(plane_to_sphere_study(p), out_ / "report.csv");
    return 0;
  }

  int texture() {
    auto p = TextureParams::from_config(cfg_);
    if (opt_.dry_run) {
      plan_header();
      std::size_t n;
      if (p.source == "plane") {
        const PlaneRect plane(make_point({-1, -1}), make_point({1, 1}));
        n = estimate_band_nodes(plane, p.dx);
      } else {
        n = estimate_band_nodes(*make_surface("cylinder", cfg_), p.dx);
      }
      std::cout << "  source=" << p.source << " target=" << p.target << " dx=" << fmt(p.dx) << " nodes~" << n
                << " steps=" << p.steps << " memory~" << mib(estimate_bytes(n, p.source == "plane" ? 2 : 3, 3, false))
                << "\n";
      return 0;
    }
    if (p.source == "cylinder") maybe_dump_band(*make_surface("cylinder", cfg_), p.dx);
    p.out = out_;
    p.log = progress();
    const auto res = texture_denoise(p);
    std::cout << "nodes=" << res.nodes << " steps=" << p.steps << " max_manifold_distance=" << fmt(res.max_manifold_distance)
              << "\n";
    std::cout << "mean_displacement initial=" << fmt(res.mean_displacement.front())
              << " final=" << fmt(res.mean_displacement.back()) << "\n";
    std::cout << "reference_displacement initial=" << fmt(res.reference_displacement.front())
              << " final=" << fmt(res.reference_displacement.back()) << "\n";
    if (p.target == "cap") std::cout << "max_cap_violation=" << fmt(res.max_cap_violation) << "\n";
    if (p.target == "mesh")
      std::cout << "mesh queries=" << res.mesh_queries << " widened=" << res.mesh_widened
                << " out_of_coverage=" << res.mesh_fallbacks << "\n";
    for (const auto& f : res.outputs) std::cout << "wrote " << f.string() << "\n";
    return 0;
  }

  int random_map() {
    auto p = RandomMapParams::from_config(cfg_);
    const Torus torus(p.torus_R, p.torus_r);
    if (opt_.dry_run) {
      plan_header();
      const auto n = estimate_band_nodes(torus, p.dx);
      std::cout << "  dx=" << fmt(p.dx) << " nodes~" << n << " max_steps=" << p.max_steps
                << " memory~" << mib(estimate_bytes(n, 3, 3, false)) << "\n";
      return 0;
    }
    maybe_dump_band(torus, p.dx);
    p.out = out_;
    p.progress = progress();
    const auto res = random_map_study(p);
    std::cout << "seed_vertices=";
    for (std::size_t i = 0; i < res.seed_vertex.size(); ++i) std::cout << (i ? "," : "") << res.seed_vertex[i];
    std::cout << "\npool=" << res.pool.size() << " initial_in_pool=" << (res.initial_in_pool ? "yes" : "no") << "\n";
    std::cout << "steps=" << res.steps << " initial_diameter=" << fmt(res.initial_diameter)
              << " final_diameter=" << fmt(res.final_diameter)
              << " ratio=" << fmt(res.initial_diameter > 0 ? res.final_diameter / res.initial_diameter : 0) << "\n";
    std::cout << "mesh queries=" << res.mesh_queries << " widened=" << res.mesh_widened
              << " out_of_coverage=" << res.mesh_fallbacks << "\n";
    for (const auto& f : res.outputs) std::cout << "wrote " << f.string() << "\n";
    return 0;
  }

  int chroma() {
    const auto p = ChromaParams::from_config(cfg_);
    if (opt_.dry_run) {
      plan_header();
      std::cout << "  image=" << (p.image.empty() ? "synthetic " + std::to_string(p.size) + "x" + std::to_string(p.size)
                                                  : p.image.string())
                << " mode=" << p.mode << " steps=" << p.steps << "\n";
      return 0;
    }
    const Image clean = p.image.empty() ? make_three_band_image(p.size) : read_image(p.image);
    const auto prob = make_chroma_problem(clean, p);
    const Field u = chroma_flow(prob, p.mode, p.steps, p.dt_factor, p.delta, {}, progress());
    const auto before = chroma_error(prob, prob.noisy_chroma);
    const auto after = chroma_error(prob, u);
    fs::create_directories(out_);
    write_image(compose_image(prob, prob.noisy_chroma), out_ / "noisy.ppm");
    write_image(compose_image(prob, u), out_ / "denoised.ppm");
    std::ostringstream csv;
    csv.precision(17);
    csv << "stage,mean,edge,interior\n";
    csv << "noisy," << before.mean << ',' << before.edge << ',' << before.interior << '\n';
    csv << p.mode << ',' << after.mean << ',' << after.edge << ',' << after.interior << '\n';
    write_text(out_ / "metrics.csv", csv.str());
    std::cout << csv.str();
    for (const char* f : {"noisy.ppm", "denoised.ppm", "metrics.csv"}) std::cout << "wrote " << (out_ / f).string() << "\n";
    return 0;
  }

  int probe() {
    const std::string surface = cfg_.str("surface", "sphere");
    const auto surf = make_surface(surface, cfg_);
    const auto dxs = cfg_.reals("dx", {0.1});
    if (dxs.size() != 1 || !(dxs[0] > 0)) throw ValidationError("dx", "probe takes a single positive dx");
    const double dx = dxs[0];
    FlowSpec spec;
    spec.dt_factor = cfg_.real("dt_factor", 0.1);
    spec.validate();
    const double h = cfg_.real("h", spec.dt_factor * dx * dx);
    if (!(h > 0)) throw ValidationError("h", "h must be positive");
    const double eps = cfg_.real("perturbation", 0.1);
    const long degree = cfg_.integer("degree", 3);
    if (opt_.dry_run) {
      plan_header();
      std::cout << "  dx=" << fmt(dx) << " nodes~" << estimate_band_nodes(*surf, dx) << " dt=" << fmt(h) << ","
                << fmt(h / 2) << "," << fmt(h / 4) << "\n";
      return 0;
    }
    BandOptions bo;
    bo.degree = static_cast<int>(degree);
    auto band = std::make_shared<const Band>(build_band(*surf, dx, bo));
    auto disc = std::make_shared<const Discretization>(Discretization::on_band(band, surf));
    CpmSolver solver(disc, surf, spec);
    const Field u0 = perturbed_identity(*band, *surf, eps);
    const auto res = consistency_probe(solver, u0, h);
    for (int k = 0; k < 3; ++k) std::cout << "dt=" << fmt(res.dt[k]) << " difference=" << fmt(res.difference[k]) << "\n";
    std::cout << "order=" << fmt(res.order) << "\n";
    return res.order >= 1.9 ? 0 : 1;
  }

  int dump_band() {
    const auto surf = make_surface(cfg_.str("surface", "sphere"), cfg_);
    const auto dxs = cfg_.reals("dx");
    if (dxs.size() != 1 || !(dxs[0] > 0)) throw ValidationError("dx", "dump-band takes a single positive dx");
    BandOptions bo;
    bo.degree = static_cast<int>(cfg_.integer("degree", 3));
    bo.radius_factor = cfg_.real("band_factor", 1.0);
    if (opt_.dry_run) {
      plan_header();
      std::cout << "  dx=" << fmt(dxs[0]) << " nodes~" << estimate_band_nodes(*surf, dxs[0], bo) << "\n";
      return 0;
    }
    const Band band = build_band(*surf, dxs[0], bo);
    const fs::path path = opt_.dump_band.empty() ? out_ / "band.csv" : fs::path(opt_.dump_band);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    dump_band_csv(band, path);
    std::cout << "nodes=" << band.size() << " degenerate=" << band.degenerate_count << "\nwrote " << path.string() << "\n";
    return 0;
  }

  std::string cmd_;
  Config cfg_;
  Options opt_;
  fs::path out_;
  std::ofstream log_file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closest point method for manifold mapping"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config, "INI-like configuration file");
  app.add_option("--set", opt.sets, "Override a key: --set key=value (repeatable)");
  app.add_option("--out", opt.out, "Output directory (default out/<command>)");
  app.add_option("--threads", opt.threads, "Worker threads (capped by CPMAP_THREADS)");
  app.add_flag("--dry-run", opt.dry_run, "Print the resolved plan without computing");
  app.add_option("--log", opt.log, "Per-step CSV for single runs, per-realization progress for studies");
  app.add_option("--dump-band", opt.dump_band, "Write the computational band as CSV");
  for (const auto& [name, keys] : kKeys) app.add_subcommand(name, "Run " + name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "UsageError", e.what());
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Config cfg;
  try {
    if (!opt.config.empty()) cfg = Config::load(opt.config);
    for (const auto& s : opt.sets) cfg.set(s);
    cfg.require_known(kKeys.at(command));
  } catch (const ValidationError& e) {
    return fail(2, e.kind(), e.what(), " key=" + e.key());
  } catch (const IoError& e) {
    return fail(4, e.kind(), e.what());
  } catch (const Error& e) {
    return fail(2, e.kind(), e.what());
  }

  try {
    configure_threads(opt.threads);
    Runner runner(command, cfg, opt);
    return runner.run();
  } catch (const ValidationError& e) {
    return fail(2, e.kind(), e.what(), " key=" + e.key());
  } catch (const Unsupported& e) {
    return fail(2, e.kind(), e.what());
  } catch (const SolverError& e) {
    return fail(3, e.kind(), e.what(), " node=" + std::to_string(e.node()));
  } catch (const IoError& e) {
    return fail(4, e.kind(), e.what());
  } catch (const ParseError& e) {
    return fail(4, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(4, "IoError", e.what());
  } catch (const Error& e) {
    return fail(3, e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(3, "InternalError", e.what());
  }
}
