#include "cpmap/trimesh.hpp"

#include "cpmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace cpmap {

// ---------------------------------------------------------------------------
// TriMesh

TriMesh TriMesh::build(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
  TriMesh m;
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
  const int nv = static_cast<int>(m.vertices.size());
  std::vector<std::size_t> degenerate;
  m.edge0.resize(m.faces.size());
  m.edge1.resize(m.faces.size());
  m.normals.resize(m.faces.size());
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    for (int v : m.faces[f])
      if (v < 0 || v >= nv)
        throw ParseError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                         " (mesh has " + std::to_string(nv) + ")");
    const Vec3& a = m.vertices[m.faces[f][0]];
    m.edge0[f] = m.vertices[m.faces[f][1]] - a;
    m.edge1[f] = m.vertices[m.faces[f][2]] - a;
    const Vec3 n = m.edge0[f].cross(m.edge1[f]);
    const double area = 0.5 * n.norm();
    if (!(area > kMinFaceArea)) {
      degenerate.push_back(f);
      continue;
    }
    m.normals[f] = n.normalized();
  }
  if (!degenerate.empty()) throw DegenerateFace(std::move(degenerate));
  return m;
}

namespace {
std::unordered_map<std::uint64_t, int> edge_use(const TriMesh& m) {
  std::unordered_map<std::uint64_t, int> use;
  use.reserve(m.faces.size() * 2);
  for (const auto& f : m.faces)
    for (int e = 0; e < 3; ++e) {
      auto a = static_cast<std::uint64_t>(f[e]), b = static_cast<std::uint64_t>(f[(e + 1) % 3]);
      if (a > b) std::swap(a, b);
      ++use[(a << 32) | b];
    }
  return use;
}
}  // namespace

std::size_t TriMesh::boundary_edge_count() const {
  std::size_t n = 0;
  for (const auto& [k, c] : edge_use(*this)) n += (c == 1);
  return n;
}

std::size_t TriMesh::edge_count() const { return edge_use(*this).size(); }

Box TriMesh::bounds() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {Point(lo), Point(hi)};
}

// ---------------------------------------------------------------------------
// Loaders

namespace {

/// Line reader that skips blank lines and '#' comments, tracking line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  bool next(std::istringstream& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.clear();
      out.str(line);
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("line " + std::to_string(line_no_) + ": " + msg);
  }
  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

void fan(const std::vector<int>& poly, std::vector<std::array<int, 3>>& faces) {
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
}

}  // namespace

TriMesh read_off(std::istream& in) {
  LineReader r(in);
  std::istringstream ls;
  if (!r.next(ls)) r.fail("empty OFF file");
  std::string magic;
  ls >> magic;
  if (magic != "OFF") r.fail("missing OFF header");
  long nv = -1, nf = -1, ne = 0;
  if (!(ls >> nv)) {
    if (!r.next(ls)) r.fail("missing OFF counts");
    ls >> nv;
  }
  if (!(ls >> nf >> ne) || nv < 0 || nf < 0) r.fail("malformed OFF counts");
  std::vector<Vec3> verts(static_cast<std::size_t>(nv));
  for (auto& v : verts) {
    if (!r.next(ls)) r.fail("unexpected end of file in vertex list");
    if (!(ls >> v.x() >> v.y() >> v.z())) r.fail("malformed vertex");
  }
  std::vector<std::array<int, 3>> faces;
  faces.reserve(static_cast<std::size_t>(nf));
  for (long f = 0; f < nf; ++f) {
    if (!r.next(ls)) r.fail("unexpected end of file in face list");
    int k = 0;
    if (!(ls >> k) || k < 3) r.fail("face needs at least 3 vertices");
    std::vector<int> poly(static_cast<std::size_t>(k));
    for (auto& i : poly)
      if (!(ls >> i)) r.fail("malformed face");
    for (int i : poly)
      if (i < 0 || i >= nv) r.fail("face index " + std::to_string(i) + " out of range");
    fan(poly, faces);
  }
  return TriMesh::build(std::move(verts), std::move(faces));
}

TriMesh read_obj(std::istream& in) {
  LineReader r(in);
  std::istringstream ls;
  std::vector<Vec3> verts;
  std::vector<std::pair<std::vector<int>, std::size_t>> polys;
  while (r.next(ls)) {
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) r.fail("malformed vertex");
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        long i = 0;
        try {
          std::size_t used = 0;
          i = std::stol(tok.substr(0, slash), &used);
          if (used != tok.substr(0, slash).size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          r.fail("malformed face index '" + tok + "'");
        }
        // 1-based; negative indices count back from the latest vertex.
        const long idx = i > 0 ? i - 1 : static_cast<long>(verts.size()) + i;
        if (i == 0 || idx < 0 || idx >= static_cast<long>(verts.size()))
          r.fail("face index " + std::to_string(i) + " out of range");
        poly.push_back(static_cast<int>(idx));
      }
      if (poly.size() < 3) r.fail("face needs at least 3 vertices");
      polys.emplace_back(std::move(poly), r.line());
    }
    // Other records (vn, vt, g, o, s, usemtl, ...) carry nothing we need.
  }
  std::vector<std::array<int, 3>> faces;
  for (const auto& [p, line] : polys) fan(p, faces);
  return TriMesh::build(std::move(verts), std::move(faces));
}

TriMesh load_mesh(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".off" && ext != ".obj") throw Unsupported("unknown mesh format '" + ext + "' (expected .off or .obj)");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh " + path.string());
  try {
    return ext == ".off" ? read_off(in) : read_obj(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_off(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  out.precision(17);
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

TriMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      return mid[key] = static_cast<int>(v.size()) - 1;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int ab = midpoint(tri[0], tri[1]), bc = midpoint(tri[1], tri[2]), ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return TriMesh::build(std::move(v), std::move(f));
}

TriMesh make_standin_bunny() {
  // Star-shaped blob: an ellipsoidal body with head, ears and tail bumps, cut
  // open by five holes so that the result has five boundary loops.
  constexpr int rings = 30, sectors = 40;
  struct Bump {
    Vec3 dir;
    double amp, width;
  };
  const Bump bumps[] = {{Vec3(0.8, 0, 0.6).normalized(), 0.35, 0.45},
                        {Vec3(0.55, 0.25, 0.8).normalized(), 0.45, 0.18},
                        {Vec3(0.55, -0.25, 0.8).normalized(), 0.45, 0.18},
                        {Vec3(-1, 0, 0.15).normalized(), 0.15, 0.25}};
  const Vec3 holes[] = {Vec3(0, 0, -1), Vec3(0.5, 0.5, -0.7).normalized(), Vec3(0.5, -0.5, -0.7).normalized(),
                        Vec3(-0.6, 0.45, -0.65).normalized(), Vec3(-0.6, -0.45, -0.65).normalized()};
  const double hole_cos[] = {std::cos(0.32), std::cos(0.16), std::cos(0.16), std::cos(0.14), std::cos(0.14)};

  auto surface_point = [&](const Vec3& d) {
    double r = 1;
    for (const auto& b : bumps) r += b.amp * std::exp(-(1 - d.dot(b.dir)) / (b.width * b.width));
    return Vec3(1.0 * r * d[0], 0.75 * r * d[1], 0.8 * r * d[2]);
  };
  std::vector<Vec3> dirs;
  dirs.emplace_back(0, 0, 1);
  for (int k = 1; k < rings; ++k) {
    const double th = std::numbers::pi * k / rings;
    for (int s = 0; s < sectors; ++s) {
      const double ph = 2 * std::numbers::pi * s / sectors + (k % 2) * std::numbers::pi / sectors;
      dirs.emplace_back(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
    }
  }
  dirs.emplace_back(0, 0, -1);
  const int south = static_cast<int>(dirs.size()) - 1;
  auto id = [&](int k, int s) { return 1 + (k - 1) * sectors + ((s % sectors) + sectors) % sectors; };

  std::vector<std::array<int, 3>> faces;
  for (int s = 0; s < sectors; ++s) faces.push_back({0, id(1, s), id(1, s + 1)});
  for (int k = 1; k + 1 < rings; ++k)
    for (int s = 0; s < sectors; ++s) {
      // Odd rings are rotated by half a sector.
      const int a = id(k, s), b = id(k, s + 1);
      const int c = k % 2 ? id(k + 1, s + 1) : id(k + 1, s);
      const int d = k % 2 ? id(k + 1, s) : id(k + 1, s - 1);
      faces.push_back({a, d, c});
      faces.push_back({a, c, b});
    }
  for (int s = 0; s < sectors; ++s) faces.push_back({south, id(rings - 1, s + 1), id(rings - 1, s)});

  std::vector<std::array<int, 3>> kept;
  for (const auto& f : faces) {
    const Vec3 c = (dirs[f[0]] + dirs[f[1]] + dirs[f[2]]).normalized();
    bool cut = false;
    for (int h = 0; h < 5; ++h) cut = cut || c.dot(holes[h]) > hole_cos[h];
    if (!cut) kept.push_back(f);
  }
  std::vector<int> remap(dirs.size(), -1);
  std::vector<Vec3> verts;
  for (auto& f : kept)
    for (int& v : f) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(verts.size());
        verts.push_back(surface_point(dirs[v]));
      }
      v = remap[v];
    }
  return TriMesh::build(std::move(verts), std::move(kept));
}

// ---------------------------------------------------------------------------
// Point-triangle kernel (Voronoi region classification)

TriangleCp closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  TriangleCp r;
  auto finish = [&](const Vec3& w, TriRegion region) {
    r.bary = w;
    r.cp = w[0] * a + w[1] * b + w[2] * c;
    r.dist2 = (p - r.cp).squaredNorm();
    r.region = region;
    return r;
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return finish({1, 0, 0}, TriRegion::VertexA);

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return finish({0, 1, 0}, TriRegion::VertexB);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return finish({1 - v, v, 0}, TriRegion::EdgeAB);
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return finish({0, 0, 1}, TriRegion::VertexC);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return finish({1 - w, 0, w}, TriRegion::EdgeCA);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return finish({0, 1 - w, w}, TriRegion::EdgeBC);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return finish({1 - v - w, v, w}, TriRegion::Face);
}

namespace {

inline void consider(const TriMesh& mesh, const Vec3& q, int f, MeshCp& best, double& best_d2) {
  const auto& t = mesh.faces[f];
  const auto r = closest_point_triangle(q, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
  if (r.dist2 < best_d2 || (r.dist2 == best_d2 && f < best.face)) {
    best_d2 = r.dist2;
    best.cp = r.cp;
    best.bary = r.bary;
    best.face = f;
  }
}

// Per-thread visit stamps so a face listed in several cells is tested once.
struct VisitMarks {
  std::vector<std::uint32_t> seen;
  std::uint32_t stamp = 0;
  std::uint32_t begin(std::size_t n) {
    if (seen.size() < n) seen.assign(n, 0);
    if (++stamp == 0) {
      std::fill(seen.begin(), seen.end(), 0);
      stamp = 1;
    }
    return stamp;
  }
};
thread_local VisitMarks tl_marks;

}  // namespace

MeshCp closest_point_brute(const TriMesh& mesh, const Vec3& q) {
  MeshCp best;
  double d2 = std::numeric_limits<double>::infinity();
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) consider(mesh, q, f, best, d2);
  best.dist = std::sqrt(d2);
  return best;
}

// ---------------------------------------------------------------------------
// FaceGrid

FaceGrid::FaceGrid(const TriMesh& mesh, double cell_size) {
  if (mesh.faces.empty()) throw ValidationError("mesh", "mesh has no faces");
  const Box bb = mesh.bounds();
  const Vec3 lo = bb.lo.head<3>(), hi = bb.hi.head<3>();
  if (cell_size <= 0) {
    double total = 0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
      total += mesh.edge0[f].norm() + mesh.edge1[f].norm();
    cell_size = total / (2.0 * static_cast<double>(mesh.faces.size()));
  }
  // Keep the cell count within a small multiple of the face count.
  const Vec3 ext = (hi - lo).cwiseMax(1e-12);
  const double min_h = std::cbrt(ext.prod() / (8.0 * static_cast<double>(mesh.faces.size()) + 1.0));
  h_ = std::max(cell_size, min_h);
  origin_ = lo - Vec3::Constant(0.5 * h_);
  for (int a = 0; a < 3; ++a) n_[a] = static_cast<int>(std::floor((hi[a] - origin_[a]) / h_)) + 1;
  const std::size_t ncell = static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];

  std::vector<std::array<int, 6>> ranges(mesh.faces.size());
  std::vector<std::uint32_t> count(ncell + 1, 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    Vec3 flo = mesh.vertices[mesh.faces[f][0]], fhi = flo;
    for (int k = 1; k < 3; ++k) {
      flo = flo.cwiseMin(mesh.vertices[mesh.faces[f][k]]);
      fhi = fhi.cwiseMax(mesh.vertices[mesh.faces[f][k]]);
    }
    const auto c0 = cell_of(flo), c1 = cell_of(fhi);
    ranges[f] = {c0[0], c0[1], c0[2], c1[0], c1[1], c1[2]};
    for (int i = c0[0]; i <= c1[0]; ++i)
      for (int j = c0[1]; j <= c1[1]; ++j)
        for (int k = c0[2]; k <= c1[2]; ++k) ++count[(static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k];
  }
  start_.assign(ncell + 1, 0);
  for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] = start_[c] + count[c];
  items_.resize(start_[ncell]);
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& r = ranges[f];
    for (int i = r[0]; i <= r[3]; ++i)
      for (int j = r[1]; j <= r[4]; ++j)
        for (int k = r[2]; k <= r[5]; ++k)
          items_[fill[(static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k]++] = static_cast<int>(f);
  }
}

std::array<int, 3> FaceGrid::cell_of(const Vec3& x) const {
  std::array<int, 3> c{};
  for (int a = 0; a < 3; ++a) {
    const double t = std::floor((x[a] - origin_[a]) / h_);
    c[a] = static_cast<int>(std::clamp(t, 0.0, static_cast<double>(n_[a] - 1)));
  }
  return c;
}

void FaceGrid::scan_cell(const TriMesh& mesh, const Vec3& q, int i, int j, int k, MeshCp& best,
                         std::vector<std::uint32_t>& seen, std::uint32_t stamp) const {
  const std::size_t c = (static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k;
  // During a search best.dist holds the squared distance.
  double d2 = best.dist;
  for (auto s = start_[c]; s < start_[c + 1]; ++s) {
    const int f = items_[s];
    if (seen[f] == stamp) continue;
    seen[f] = stamp;
    consider(mesh, q, f, best, d2);
  }
  best.dist = d2;
}

MeshCp FaceGrid::closest(const TriMesh& mesh, const Vec3& q) const {
  auto& marks = tl_marks;
  const auto stamp = marks.begin(mesh.faces.size());
  const auto c = cell_of(q);
  MeshCp best;
  best.dist = std::numeric_limits<double>::infinity();
  for (int k = 0;; ++k) {
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(c[a] - k, 0);
      hi[a] = std::min(c[a] + k, n_[a] - 1);
    }
    for (int i = lo[0]; i <= hi[0]; ++i)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int l = lo[2]; l <= hi[2]; ++l) {
          const int cheb = std::max({std::abs(i - c[0]), std::abs(j - c[1]), std::abs(l - c[2])});
          if (cheb == k) scan_cell(mesh, q, i, j, l, best, marks.seen, stamp);
        }
    // Distance from q to the unvisited cells (only on sides not at the edge).
    double bound = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (lo[a] > 0) bound = std::min(bound, std::max(0.0, q[a] - (origin_[a] + lo[a] * h_)));
      if (hi[a] < n_[a] - 1) bound = std::min(bound, std::max(0.0, origin_[a] + (hi[a] + 1) * h_ - q[a]));
    }
    if (std::isinf(bound)) break;
    if (best.face >= 0 && best.dist < bound * bound) break;
  }
  best.dist = std::sqrt(best.dist);
  return best;
}

MeshCp FaceGrid::closest_in_box(const TriMesh& mesh, const Vec3& q, const Vec3& lo, const Vec3& hi) const {
  auto& marks = tl_marks;
  const auto stamp = marks.begin(mesh.faces.size());
  const auto c0 = cell_of(lo), c1 = cell_of(hi);
  MeshCp best;
  best.dist = std::numeric_limits<double>::infinity();
  for (int i = c0[0]; i <= c1[0]; ++i)
    for (int j = c0[1]; j <= c1[1]; ++j)
      for (int k = c0[2]; k <= c1[2]; ++k) scan_cell(mesh, q, i, j, k, best, marks.seen, stamp);
  if (best.face >= 0) best.dist = std::sqrt(best.dist);
  return best;
}

MeshCp closest_point_exact(const TriMesh& mesh, const FaceGrid& grid, const Vec3& q) {
  return grid.closest(mesh, q);
}

// ---------------------------------------------------------------------------
// CpGrid

CpGrid::CpGrid(const TriMesh& mesh, const FaceGrid& faces, double spacing, double radius,
               std::size_t max_cells)
    : h_(spacing), radius_(radius) {
  if (!(spacing > 0)) throw ValidationError("spacing", "cp grid spacing must be positive");
  if (!(radius > 0)) throw ValidationError("radius", "cp grid radius must be positive");
  if (radius < spacing) throw ValidationError("radius", "cp grid radius must be >= spacing");
  const Box bb = mesh.bounds();
  const Vec3 lo = bb.lo.head<3>(), hi = bb.hi.head<3>();
  for (int a = 0; a < 3; ++a) {
    origin_[a] = std::floor((lo[a] - radius) / h_) * h_;
    const double cells = std::ceil((hi[a] + radius - origin_[a]) / h_) + 1;
    if (cells > 2e9) throw CapacityError("cp grid axis too long");
    n_[a] = static_cast<int>(cells);
  }
  const double total = static_cast<double>(n_[0]) * n_[1] * n_[2];
  if (total > static_cast<double>(max_cells))
    throw CapacityError("cp grid needs " + std::to_string(static_cast<long long>(total)) +
                        " cells, above the ceiling of " + std::to_string(max_cells));
  const std::size_t ncell = static_cast<std::size_t>(total);
  slot_.assign(ncell, -1);

  // Candidates: cells inside some face's bounding box inflated by the radius.
  std::vector<std::uint8_t> mark(ncell, 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    Vec3 flo = mesh.vertices[mesh.faces[f][0]], fhi = flo;
    for (int k = 1; k < 3; ++k) {
      flo = flo.cwiseMin(mesh.vertices[mesh.faces[f][k]]);
      fhi = fhi.cwiseMax(mesh.vertices[mesh.faces[f][k]]);
    }
    std::array<int, 3> a{}, b{};
    for (int d = 0; d < 3; ++d) {
      a[d] = std::max(0, static_cast<int>(std::ceil((flo[d] - radius - origin_[d]) / h_)));
      b[d] = std::min(n_[d] - 1, static_cast<int>(std::floor((fhi[d] + radius - origin_[d]) / h_)));
    }
    for (int i = a[0]; i <= b[0]; ++i)
      for (int j = a[1]; j <= b[1]; ++j)
        for (int k = a[2]; k <= b[2]; ++k) mark[(static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k] = 1;
  }
  std::vector<std::size_t> cand;
  for (std::size_t c = 0; c < ncell; ++c)
    if (mark[c]) cand.push_back(c);
  std::vector<MeshCp> result(cand.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(cand.size()); ++t) {
    const std::size_t c = cand[t];
    const int k = static_cast<int>(c % n_[2]);
    const int j = static_cast<int>((c / n_[2]) % n_[1]);
    const int i = static_cast<int>(c / (static_cast<std::size_t>(n_[2]) * n_[1]));
    result[t] = faces.closest(mesh, node(i, j, k));
  }
  for (std::size_t t = 0; t < cand.size(); ++t) {
    if (result[t].dist > radius) continue;
    slot_[cand[t]] = static_cast<std::int32_t>(entries_.size());
    entries_.push_back(result[t]);
  }
  stored_ = entries_.size();
}

const MeshCp* CpGrid::at(int i, int j, int k) const {
  if (i < 0 || j < 0 || k < 0 || i >= n_[0] || j >= n_[1] || k >= n_[2]) return nullptr;
  const auto s = slot_[(static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k];
  return s < 0 ? nullptr : &entries_[s];
}

// ---------------------------------------------------------------------------
// Local search

namespace {

std::optional<MeshCp> try_local(const TriMesh& mesh, const FaceGrid& faces, const CpGrid& grid,
                                const Vec3& q, LocalSearchStats* stats) {
  const double h = grid.spacing();
  const Vec3 rel = (q - grid.origin()) / h;
  const int i0 = static_cast<int>(std::floor(rel.x()));
  const int j0 = static_cast<int>(std::floor(rel.y()));
  const int k0 = static_cast<int>(std::floor(rel.z()));
  std::array<const MeshCp*, 8> corner{};
  Vec3 centroid = Vec3::Zero();
  for (int c = 0; c < 8; ++c) {
    corner[c] = grid.at(i0 + (c & 1), j0 + ((c >> 1) & 1), k0 + ((c >> 2) & 1));
    if (!corner[c]) return std::nullopt;
    centroid += corner[c]->cp;
  }
  centroid /= 8.0;
  double R = 0;
  for (const auto* e : corner) R = std::max(R, (e->cp - centroid).norm());
  R += h;
  MeshCp best = faces.closest_in_box(mesh, q, centroid - Vec3::Constant(R), centroid + Vec3::Constant(R));
  // Certified when the ball around q of radius best.dist lies inside the
  // searched sphere: every face that could beat or tie `best` was tested.
  if (best.face < 0 || (q - centroid).norm() + best.dist > R) {
    if (stats) ++stats->widened;
    const double d = best.face < 0 ? (q - centroid).norm() + R : best.dist;
    const double pad = d * (1 + 1e-12) + 1e-14;
    best = faces.closest_in_box(mesh, q, q - Vec3::Constant(pad), q + Vec3::Constant(pad));
  }
  return best;
}

}  // namespace

MeshCp closest_point_local(const TriMesh& mesh, const FaceGrid& faces, const CpGrid& grid,
                           const Vec3& q, LocalSearchStats* stats) {
  if (stats) ++stats->queries;
  auto r = try_local(mesh, faces, grid, q, stats);
  if (!r) throw OutOfCoverage("query lies outside the precomputed closest point grid");
  return *r;
}

// ---------------------------------------------------------------------------
// MeshSurface

MeshSurface::MeshSurface(TriMesh mesh) : mesh_(std::move(mesh)), faces_(mesh_), closed_(mesh_.closed()) {}

void MeshSurface::precompute(double spacing, double radius, std::size_t max_cells) {
  grid_ = std::make_unique<CpGrid>(mesh_, faces_, spacing, radius, max_cells);
}

MeshCp MeshSurface::query(const Vec3& q) const {
  if (grid_) {
    ++stats_.queries;
    if (auto r = try_local(mesh_, faces_, *grid_, q, &stats_)) return *r;
    ++stats_.fallbacks;
  }
  return faces_.closest(mesh_, q);
}

CpResult MeshSurface::closest_point_any(const Point& x) const {
  const Vec3 q = x.head<3>();
  const MeshCp m = query(q);
  CpResult r;
  r.cp = m.cp;
  r.dist = m.dist;
  return r;
}

}  // namespace cpmap
