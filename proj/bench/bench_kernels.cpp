// Parallel kernels against their serial references on a sphere band.

#include "cpmap/band.hpp"
#include "cpmap/kernels.hpp"
#include "cpmap/rng.hpp"

#include <benchmark/benchmark.h>

#include <memory>

namespace {

struct Fixture {
  cpmap::Band band;
  cpmap::SparseOperator E, L;
  cpmap::Field u;
  cpmap::Hypersphere sphere{3};

  explicit Fixture(double dx) : band(cpmap::build_band(cpmap::Hypersphere(3), dx)) {
    E = cpmap::assemble_extension(band);
    L = cpmap::assemble_laplacian(band);
    u.resize(static_cast<Eigen::Index>(band.size()), 3);
    cpmap::RngStream rng(3, 0);
    for (Eigen::Index r = 0; r < u.rows(); ++r)
      u.row(r) = (band.cp[r] + 0.05 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal())).normalized().transpose();
  }
};

Fixture& fixture(int which) {
  static Fixture coarse(0.1), fine(0.05);
  return which == 0 ? coarse : fine;
}

void BM_SpmvExtension(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  cpmap::Field out;
  for (auto _ : st) {
    st.range(1) ? cpmap::spmv(f.E, f.u, out) : cpmap::spmv_serial(f.E, f.u, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(f.E.nnz()));
}

void BM_EulerUpdate(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  cpmap::Field out;
  for (auto _ : st) {
    st.range(1) ? cpmap::euler_update(f.L, f.u, 1e-3, out) : cpmap::euler_update_serial(f.L, f.u, 1e-3, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(f.L.nnz()));
}

void BM_Project(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  cpmap::Field w = 1.01 * f.u, out;
  for (auto _ : st) {
    auto res = st.range(1) ? cpmap::project_rows(f.sphere, w, out) : cpmap::project_rows_serial(f.sphere, w, out);
    benchmark::DoNotOptimize(res);
  }
  st.SetItemsProcessed(st.iterations() * w.rows());
}

// Args: {grid (0: dx=0.1, 1: dx=0.05), parallel}
BENCHMARK(BM_SpmvExtension)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EulerUpdate)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Project)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
