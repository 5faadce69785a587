#include "cpmap/band.hpp"

#include "cpmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

namespace cpmap {

double band_radius_factor(int m, int p) {
  const double h = (p + 1) / 2.0;
  return std::sqrt((m - 1) * h * h + (1 + h) * (1 + h));
}

std::uint64_t pack_index(const Index3& idx) {
  constexpr std::int64_t kOff = 1 << 20;
  std::uint64_t key = 0;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t v = idx[a] + kOff;
    if (v < 0 || v >= 2 * kOff) throw CapacityError("grid index out of packable range");
    key = (key << 21) | static_cast<std::uint64_t>(v);
  }
  return key;
}

int Band::find(const Index3& idx) const {
  auto it = lookup_.find(pack_index(idx));
  return it == lookup_.end() ? -1 : it->second;
}

void Band::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(index.size() * 2);
  for (std::size_t r = 0; r < index.size(); ++r) lookup_.emplace(pack_index(index[r]), static_cast<int>(r));
}

std::vector<int> Band::near_surface() const {
  std::vector<int> rows;
  for (std::size_t r = 0; r < size(); ++r)
    if (core[r] && (planar || dist[r] <= lambda_c)) rows.push_back(static_cast<int>(r));
  return rows;
}

namespace {

int stencil_base(const Band& band, const Eigen::Vector3d& cp, int axis) {
  const double y = (cp[axis] - band.origin[axis]) / band.dx;
  return static_cast<int>(std::floor(y - (band.degree - 1) / 2.0));
}

struct NodeRecord {
  Index3 idx;
  Eigen::Vector3d x, cp;
  double dist;
  bool unique;
  bool core;
};

NodeRecord evaluate(const Surface& s, const Band& band, const Index3& idx) {
  NodeRecord r;
  r.idx = idx;
  r.x = band.origin;
  for (int a = 0; a < band.dim; ++a) r.x[a] += band.dx * idx[a];
  Point q(band.dim);
  for (int a = 0; a < band.dim; ++a) q[a] = r.x[a];
  const CpResult c = s.closest_point_any(q);
  r.cp = Eigen::Vector3d::Zero();
  for (int a = 0; a < band.dim; ++a) r.cp[a] = c.cp[a];
  r.dist = c.dist;
  r.unique = c.unique;
  r.core = c.dist <= band.radius;
  return r;
}

Band planar_band(const PlaneRect& plane, double dx) {
  Band b;
  b.dim = 2;
  b.dx = dx;
  b.planar = true;
  const Box box = plane.bounds();
  b.origin = Eigen::Vector3d(box.lo[0], box.lo[1], 0);
  const int nx = static_cast<int>(std::lround((box.hi[0] - box.lo[0]) / dx)) + 1;
  const int ny = static_cast<int>(std::lround((box.hi[1] - box.lo[1]) / dx)) + 1;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      b.index.push_back({i, j, 0});
      const Eigen::Vector3d x(b.origin[0] + i * dx, b.origin[1] + j * dx, 0);
      b.x.push_back(x);
      b.cp.push_back(x);
      b.dist.push_back(0);
      b.core.push_back(1);
    }
  b.rebuild_lookup();
  return b;
}

}  // namespace

Band build_band(const Surface& surface, double dx, const BandOptions& opt) {
  if (!(dx > 0)) throw ValidationError("dx", "dx must be positive");
  if (opt.degree < 1) throw ValidationError("degree", "interpolation degree must be >= 1");
  if (!(opt.radius_factor >= 1)) throw ValidationError("band_factor", "band factor must be >= 1");
  const int m = surface.dim();
  if (m == 2) {
    if (auto* plane = dynamic_cast<const PlaneRect*>(&surface)) return planar_band(*plane, dx);
  }
  if (m != 2 && m != 3) throw Unsupported("band construction supports embedding dimension 2 or 3");

  Band band;
  band.dim = m;
  band.dx = dx;
  band.degree = opt.degree;
  band.lambda_c = band_radius_factor(m, opt.degree) * dx;
  band.radius = opt.radius_factor * band.lambda_c;

  // Scan the inflated bounding box in blocks; distance is 1-Lipschitz, so a
  // block whose centre is farther than radius + half-diagonal is empty.
  const Box box = surface.bounds();
  const double pad = band.radius + (opt.degree + 2) * dx;
  Index3 lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < m; ++a) {
    lo[a] = static_cast<int>(std::floor((box.lo[a] - pad) / dx));
    hi[a] = static_cast<int>(std::ceil((box.hi[a] + pad) / dx));
  }
  constexpr int B = 8;
  std::vector<Index3> blocks;
  for (int i = lo[0]; i <= hi[0]; i += B)
    for (int j = lo[1]; j <= hi[1]; j += B)
      for (int k = lo[2]; k <= hi[2]; k += B) blocks.push_back({i, j, k});
  const double half_diag = std::sqrt(static_cast<double>(m)) * 0.5 * (B - 1) * dx;

  std::vector<std::vector<NodeRecord>> found(blocks.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(blocks.size()); ++bi) {
    const Index3 b0 = blocks[bi];
    Index3 b1{};
    for (int a = 0; a < 3; ++a) b1[a] = a < m ? std::min(b0[a] + B - 1, hi[a]) : 0;
    Point centre(m);
    for (int a = 0; a < m; ++a) centre[a] = dx * 0.5 * (b0[a] + b0[a] + B - 1);
    if (surface.closest_point_any(centre).dist - half_diag > band.radius) continue;
    for (int i = b0[0]; i <= b1[0]; ++i)
      for (int j = b0[1]; j <= b1[1]; ++j)
        for (int k = b0[2]; k <= b1[2]; ++k) {
          auto rec = evaluate(surface, band, {i, j, k});
          if (rec.core) found[bi].push_back(rec);
        }
  }
  std::vector<NodeRecord> nodes;
  for (auto& f : found) nodes.insert(nodes.end(), f.begin(), f.end());
  if (nodes.empty()) throw EmptyBand("no grid nodes within the band radius of " + surface.name());

  // Closure: Laplacian neighbours of core nodes, then interpolation stencils
  // of every node (iterated, since added nodes need stencils too).
  std::unordered_map<std::uint64_t, int> have;
  have.reserve(nodes.size() * 2);
  for (std::size_t r = 0; r < nodes.size(); ++r) have.emplace(pack_index(nodes[r].idx), static_cast<int>(r));
  auto add = [&](const Index3& idx) {
    if (have.count(pack_index(idx))) return;
    auto rec = evaluate(surface, band, idx);
    rec.core = false;
    have.emplace(pack_index(idx), static_cast<int>(nodes.size()));
    nodes.push_back(rec);
  };
  if (opt.laplacian_ring) {
    const std::size_t ncore = nodes.size();
    for (std::size_t r = 0; r < ncore; ++r)
      for (int a = 0; a < m; ++a)
        for (int s : {-1, 1}) {
          Index3 n = nodes[r].idx;
          n[a] += s;
          add(n);
        }
  }
  const int np = opt.degree + 1;
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    Index3 base{0, 0, 0};
    for (int a = 0; a < m; ++a) base[a] = stencil_base(band, nodes[r].cp, a);
    const int nk = m == 3 ? np : 1;
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < np; ++j)
        for (int k = 0; k < nk; ++k) add({base[0] + i, base[1] + j, m == 3 ? base[2] + k : 0});
  }

  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nodes[a].idx < nodes[b].idx; });
  band.index.reserve(nodes.size());
  for (auto o : order) {
    const auto& n = nodes[o];
    band.index.push_back(n.idx);
    band.x.push_back(n.x);
    band.cp.push_back(n.cp);
    band.dist.push_back(n.dist);
    band.core.push_back(n.core ? 1 : 0);
    band.degenerate_count += n.unique ? 0 : 1;
  }
  band.rebuild_lookup();
  return band;
}

void lagrange_weights(int p, double t, double* w) {
  // Barycentric weights for equispaced nodes: (-1)^k C(p, k).
  double lam = 1;
  double sum = 0;
  for (int k = 0; k <= p; ++k) {
    if (k > 0) lam = -lam * (p - k + 1) / k;
    const double d = t - k;
    if (d == 0) {
      std::fill(w, w + p + 1, 0.0);
      w[k] = 1;
      return;
    }
    w[k] = lam / d;
    sum += w[k];
  }
  for (int k = 0; k <= p; ++k) w[k] /= sum;
}

SparseOperator assemble_extension(const Band& band) {
  if (band.planar) throw Unsupported("planar grids have no closest point extension");
  SparseOperator op;
  op.kind = OperatorKind::Extension;
  op.cols = band.size();
  const int m = band.dim, p = band.degree, np = p + 1;
  const int nk = m == 3 ? np : 1;
  op.col.reserve(band.size() * np * np * nk);
  op.val.reserve(band.size() * np * np * nk);
  std::vector<double> w[3] = {std::vector<double>(np, 1.0), std::vector<double>(np, 1.0),
                              std::vector<double>(np, 1.0)};
  for (std::size_t r = 0; r < band.size(); ++r) {
    Index3 base{0, 0, 0};
    for (int a = 0; a < m; ++a) {
      base[a] = stencil_base(band, band.cp[r], a);
      const double t = (band.cp[r][a] - band.origin[a]) / band.dx - base[a];
      lagrange_weights(p, t, w[a].data());
    }
    if (m == 2) w[2][0] = 1;
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < np; ++j)
        for (int k = 0; k < nk; ++k) {
          const Index3 idx{base[0] + i, base[1] + j, m == 3 ? base[2] + k : 0};
          const int c = band.find(idx);
          if (c < 0)
            throw MissingStencilNode("extension stencil of node " + std::to_string(r) + " needs an absent node");
          op.push(static_cast<std::uint32_t>(c), w[0][i] * w[1][j] * w[2][k]);
        }
    op.end_row();
  }
  return op;
}

SparseOperator assemble_laplacian(const Band& band, bool core_only) {
  SparseOperator op;
  op.kind = OperatorKind::Laplacian;
  op.cols = band.size();
  const double inv = 1.0 / (band.dx * band.dx);
  const int m = band.dim;
  for (std::size_t r = 0; r < band.size(); ++r) {
    if (core_only && !band.core[r]) {
      op.end_row();
      continue;
    }
    // Stored in increasing column order: -axis neighbours, centre, +axis.
    std::array<std::pair<int, double>, 7> e{};
    int n = 0;
    e[n++] = {static_cast<int>(r), -2.0 * m * inv};
    for (int a = 0; a < m; ++a)
      for (int s : {-1, 1}) {
        Index3 idx = band.index[r];
        idx[a] += s;
        const int c = band.find(idx);
        if (c < 0) throw MissingStencilNode("Laplacian stencil of node " + std::to_string(r) + " needs an absent node");
        e[n++] = {c, inv};
      }
    std::sort(e.begin(), e.begin() + n);
    for (int t = 0; t < n; ++t) op.push(static_cast<std::uint32_t>(e[t].first), e[t].second);
    op.end_row();
  }
  return op;
}

std::vector<GradientPair> assemble_gradients(const Band& band, bool fallback) {
  std::vector<GradientPair> out(band.dim);
  const double inv = 1.0 / band.dx;
  for (int a = 0; a < band.dim; ++a) {
    auto& fw = out[a].forward;
    auto& bw = out[a].backward;
    fw.kind = OperatorKind::GradForward;
    bw.kind = OperatorKind::GradBackward;
    fw.axis = bw.axis = a;
    fw.cols = bw.cols = band.size();
    for (std::size_t r = 0; r < band.size(); ++r) {
      Index3 up = band.index[r], down = band.index[r];
      ++up[a];
      --down[a];
      const int cu = band.find(up), cd = band.find(down);
      const auto self = static_cast<std::uint32_t>(r);
      auto emit = [&](SparseOperator& op, int primary, bool forward) {
        const int other = forward ? cd : cu;
        if (primary >= 0) {
          forward ? (op.push(self, -inv), op.push(primary, inv)) : (op.push(primary, -inv), op.push(self, inv));
        } else if (!fallback) {
          throw MissingStencilNode("gradient stencil of node " + std::to_string(r) + " needs an absent node");
        } else if (other >= 0) {
          forward ? (op.push(other, -inv), op.push(self, inv)) : (op.push(self, -inv), op.push(other, inv));
        }
        op.end_row();
      };
      emit(fw, cu, true);
      emit(bw, cd, false);
    }
  }
  return out;
}

void dump_band_csv(const Band& band, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,i,j,k,x,y,z,cpx,cpy,cpz,dist,core\n";
  out.precision(17);
  for (std::size_t r = 0; r < band.size(); ++r) {
    const auto& idx = band.index[r];
    out << r << ',' << idx[0] << ',' << idx[1] << ',' << idx[2] << ',' << band.x[r][0] << ',' << band.x[r][1]
        << ',' << band.x[r][2] << ',' << band.cp[r][0] << ',' << band.cp[r][1] << ',' << band.cp[r][2] << ','
        << band.dist[r] << ',' << int(band.core[r]) << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace cpmap
