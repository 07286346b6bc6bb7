#include "eigbound/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace eigbound {

double SizeField::size_at(Vec2 p) const {
  if (corners.empty() || exponent <= 0.0) return h_max;
  double r2 = std::numeric_limits<double>::infinity();
  for (const Vec2& c : corners) {
    const Vec2 d = p - c;
    r2 = std::min(r2, dot(d, d));
  }
  const double r = std::sqrt(r2) / cutoff;
  if (r >= 1.0) return h_max;
  return h_max * std::pow(r, exponent);
}

namespace {

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t)(std::uint32_t)a << 32 | (std::uint32_t)b;
}

double tri_signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * cross(b - a, c - a);
}

}  // namespace

void Mesh::finalize() {
  const int nt = (int)tris.size();
  area.assign(nt, 0.0);
  h_k.assign(nt, 0.0);
  tri_edges.assign(nt, {-1, -1, -1});
  tri_edge_asc.assign(nt, {false, false, false});
  boundary_edge_of_tri.assign(nt, -1);
  h_max = 0.0;

  for (int t = 0; t < nt; ++t) {
    auto& tv = tris[t];
    for (int l = 0; l < 3; ++l) {
      if (tv[l] < 0 || tv[l] >= (int)vertices.size())
        throw std::runtime_error("mesh: vertex index out of range");
    }
    double sa = tri_signed_area(vertices[tv[0]], vertices[tv[1]], vertices[tv[2]]);
    if (sa < 0.0) {
      std::swap(tv[1], tv[2]);
      sa = -sa;
    }
    if (!(sa > 0.0)) throw std::runtime_error("mesh: degenerate (zero-area) triangle");
    area[t] = sa;
    double h = 0.0;
    for (int l = 0; l < 3; ++l) {
      const Vec2 d = vertices[tv[(l + 2) % 3]] - vertices[tv[(l + 1) % 3]];
      h = std::max(h, std::sqrt(dot(d, d)));
    }
    h_k[t] = h;
    h_max = std::max(h_max, h);
  }

  // Collect unique edges, deterministically ordered by (v0, v1).
  std::map<std::pair<int, int>, std::array<int, 2>> emap;  // -> adjacent tris
  for (int t = 0; t < nt; ++t) {
    for (int l = 0; l < 3; ++l) {
      int a = tris[t][(l + 1) % 3], b = tris[t][(l + 2) % 3];
      auto key = std::minmax(a, b);
      auto [it, fresh] = emap.try_emplace({key.first, key.second},
                                          std::array<int, 2>{-1, -1});
      auto& adj = it->second;
      if (adj[0] == -1) adj[0] = t;
      else if (adj[1] == -1) adj[1] = t;
      else throw std::runtime_error("mesh: edge shared by more than two triangles");
    }
  }

  edges.clear();
  edges.reserve(emap.size());
  std::unordered_map<std::uint64_t, int> eindex;
  eindex.reserve(emap.size() * 2);
  n_boundary_edges = 0;
  for (const auto& [vv, adj] : emap) {
    Edge e;
    e.v0 = vv.first;
    e.v1 = vv.second;
    e.t0 = adj[0];
    e.t1 = adj[1];
    e.marker = (adj[1] == -1) ? 1 : 0;
    if (e.marker) ++n_boundary_edges;
    eindex[edge_key(e.v0, e.v1)] = (int)edges.size();
    edges.push_back(e);
  }

  for (int t = 0; t < nt; ++t) {
    int nb = 0;
    for (int l = 0; l < 3; ++l) {
      const int a = tris[t][(l + 1) % 3], b = tris[t][(l + 2) % 3];
      const int ei = eindex.at(edge_key(a, b));
      tri_edges[t][l] = ei;
      tri_edge_asc[t][l] = a < b;
      if (edges[ei].marker != 0) {
        boundary_edge_of_tri[t] = (nb == 0) ? l : -2;
        ++nb;
      }
    }
  }
}

double Mesh::total_area() const {
  double s = 0.0;
  for (double a : area) s += a;
  return s;
}

bool Mesh::steklov_compatible() const {
  for (int t = 0; t < (int)tris.size(); ++t)
    if (boundary_edge_of_tri[t] == -2) return false;
  return true;
}

double Mesh::boundary_height(int t) const {
  const int l = boundary_edge_of_tri[t];
  if (l < 0) throw std::runtime_error("boundary_height: not a single-boundary-edge element");
  const Edge& e = edges[tri_edges[t][l]];
  const Vec2 d = vertices[e.v1] - vertices[e.v0];
  return 2.0 * area[t] / std::sqrt(dot(d, d));
}

Mesh uniform_square(int n) {
  if (n < 1) throw std::invalid_argument("uniform_square: N must be >= 1");
  Mesh m;
  m.vertices.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.vertices.push_back({(double)i / n, (double)j / n});
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      // Same diagonal direction in every cell: lower-left to upper-right.
      m.tris.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.tris.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  m.finalize();
  return m;
}

std::vector<Vec2> template_domain(DomainKind kind, double bar_width) {
  switch (kind) {
    case DomainKind::square:
      return {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    case DomainKind::lshape:
      return {{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
    case DomainKind::dumbbell: {
      if (!(bar_width > 0.0 && bar_width < 1.0))
        throw std::invalid_argument("dumbbell: bar width must be in (0,1)");
      const double y0 = (1.0 - bar_width) / 2.0;
      const double y1 = (1.0 + bar_width) / 2.0;
      return {{0, 0}, {1, 0}, {1, y0}, {2, y0}, {2, 0}, {3, 0},
              {3, 1}, {2, 1}, {2, y1}, {1, y1}, {1, 1}, {0, 1}};
    }
  }
  throw std::invalid_argument("template_domain: unknown kind");
}

std::vector<Vec2> reentrant_corners(DomainKind kind, double bar_width) {
  switch (kind) {
    case DomainKind::square:
      return {};
    case DomainKind::lshape:
      return {{1, 1}};
    case DomainKind::dumbbell: {
      const double y0 = (1.0 - bar_width) / 2.0;
      const double y1 = (1.0 + bar_width) / 2.0;
      return {{1, y0}, {2, y0}, {2, y1}, {1, y1}};
    }
  }
  throw std::invalid_argument("reentrant_corners: unknown kind");
}

double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0.0;
  const int n = (int)poly.size();
  for (int i = 0; i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * s;
}

namespace {

void check_rectilinear(const std::vector<Vec2>& poly) {
  const int n = (int)poly.size();
  if (n < 4) throw std::invalid_argument("polygon: need at least 4 vertices");
  if (polygon_area(poly) <= 0.0)
    throw std::invalid_argument("polygon: must be counterclockwise with positive area");
  for (int i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    const bool horiz = a.y == b.y && a.x != b.x;
    const bool vert = a.x == b.x && a.y != b.y;
    if (!horiz && !vert)
      throw std::invalid_argument("polygon: only axis-aligned rectilinear outlines are supported");
    const Vec2 c = poly[(i + 2) % n];
    const bool next_horiz = b.y == c.y && b.x != c.x;
    if (horiz == next_horiz)
      throw std::invalid_argument("polygon: collinear consecutive vertices rejected");
  }
}

bool point_in_rectilinear(const std::vector<Vec2>& poly, Vec2 p) {
  // Even-odd rule with a horizontal ray; p is a cell centroid, never on an edge.
  bool inside = false;
  const int n = (int)poly.size();
  for (int i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

std::vector<double> subdivide_breaks(std::vector<double> breaks, double step) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> out;
  for (size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    const int m = std::max(1, (int)std::ceil((b - a) / step - 1e-12));
    for (int k = 0; k < m; ++k) out.push_back(a + (b - a) * k / m);
  }
  out.push_back(breaks.back());
  return out;
}

}  // namespace

Mesh triangulate_rectilinear(const std::vector<Vec2>& poly, double h_cap) {
  check_rectilinear(poly);
  if (!(h_cap > 0.0)) throw std::invalid_argument("triangulate: h_cap must be positive");
  const double step = h_cap / std::sqrt(2.0);
  std::vector<double> xb, yb;
  for (const Vec2& p : poly) {
    xb.push_back(p.x);
    yb.push_back(p.y);
  }
  xb = subdivide_breaks(xb, step);
  yb = subdivide_breaks(yb, step);

  const int nx = (int)xb.size(), ny = (int)yb.size();
  Mesh m;
  std::vector<int> vid((size_t)nx * ny, -1);
  auto get_vid = [&](int i, int j) {
    int& v = vid[(size_t)j * nx + i];
    if (v == -1) {
      v = (int)m.vertices.size();
      m.vertices.push_back({xb[i], yb[j]});
    }
    return v;
  };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const Vec2 c{0.5 * (xb[i] + xb[i + 1]), 0.5 * (yb[j] + yb[j + 1])};
      if (!point_in_rectilinear(poly, c)) continue;
      const int bl = get_vid(i, j), br = get_vid(i + 1, j);
      const int tr = get_vid(i + 1, j + 1), tl = get_vid(i, j + 1);
      m.tris.push_back({bl, br, tr});
      m.tris.push_back({bl, tr, tl});
    }
  if (m.tris.empty()) throw std::runtime_error("triangulate: no cells inside polygon");
  m.finalize();

  const double want = polygon_area(poly);
  if (std::fabs(m.total_area() - want) > 1e-12 * want)
    throw std::runtime_error("triangulate: cell area does not cover the polygon "
                             "(non-grid-aligned feature?)");
  return m;
}

namespace {

// Working structure for conforming longest-edge bisection. Triangles carry
// neighbor links per local edge; dead triangles are tombstoned.
struct Refiner {
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> tv;     // vertex ids, CCW
  std::vector<std::array<int, 3>> nbr;    // neighbor tri per local edge, -1 boundary
  std::vector<bool> dead;
  long long splits = 0;

  explicit Refiner(const Mesh& m) {
    verts = m.vertices;
    tv.assign(m.tris.begin(), m.tris.end());
    nbr.assign(tv.size(), {-1, -1, -1});
    dead.assign(tv.size(), false);
    for (int t = 0; t < (int)tv.size(); ++t)
      for (int l = 0; l < 3; ++l) {
        const int e = m.tri_edges[t][l];
        const auto& ed = m.edges[e];
        nbr[t][l] = (ed.t0 == t) ? ed.t1 : ed.t0;
      }
  }

  double len2(int a, int b) const {
    const Vec2 d = verts[b] - verts[a];
    return dot(d, d);
  }

  // Deterministic longest edge: maximal squared length, ties broken by the
  // smaller (min id, max id) pair of the edge endpoints.
  int longest_edge(int t) const {
    int best = -1;
    double bl = -1.0;
    std::pair<int, int> bkey{0, 0};
    for (int l = 0; l < 3; ++l) {
      const int a = tv[t][(l + 1) % 3], b = tv[t][(l + 2) % 3];
      const double L = len2(a, b);
      const std::pair<int, int> key = std::minmax(a, b);
      if (L > bl || (L == bl && key < bkey)) {
        bl = L;
        best = l;
        bkey = key;
      }
    }
    return best;
  }

  int local_edge_of(int t, int va, int vb) const {
    for (int l = 0; l < 3; ++l) {
      const int a = tv[t][(l + 1) % 3], b = tv[t][(l + 2) % 3];
      if ((a == va && b == vb) || (a == vb && b == va)) return l;
    }
    throw std::logic_error("refine: neighbor does not share the expected edge");
  }

  void set_neighbor(int t, int l, int n) {
    if (t >= 0) nbr[t][l] = n;
  }

  // Replaces neighbor `old_t` of triangle `t` (across the edge va-vb) by `new_t`.
  void replace_neighbor(int t, int va, int vb, int new_t) {
    if (t < 0) return;
    nbr[t][local_edge_of(t, va, vb)] = new_t;
  }

  // Splits triangle t across local edge l at vertex mid; returns the two
  // children (child0 contains corner (l+1)%3, child1 contains corner (l+2)%3).
  // Neighbor links are patched except across the split edge itself, which the
  // caller wires to the paired children of the other adjacent triangle.
  std::pair<int, int> split_one(int t, int l, int vmid) {
    const int v0 = tv[t][l], va = tv[t][(l + 1) % 3], vb = tv[t][(l + 2) % 3];
    const int n_op_b = nbr[t][(l + 2) % 3];  // across edge v0-va
    const int n_op_a = nbr[t][(l + 1) % 3];  // across edge v0-vb
    const int c0 = (int)tv.size(), c1 = c0 + 1;
    tv.push_back({v0, va, vmid});  // CCW preserved
    tv.push_back({v0, vmid, vb});
    nbr.push_back({-1, -1, -1});
    nbr.push_back({-1, -1, -1});
    dead.push_back(false);
    dead.push_back(false);
    // c0 edges: opp v0 = va-vmid (outer half, wired by caller);
    //           opp va = vmid-v0 = c1; opp vmid = v0-va = old neighbor n_op_b.
    nbr[c0] = {-1, c1, n_op_b};
    replace_neighbor(n_op_b, v0, va, c0);
    // c1 edges: opp v0 = vmid-vb (outer half, wired by caller);
    //           opp vmid = vb-v0 = old neighbor n_op_a; opp vb = v0-vmid = c0.
    nbr[c1] = {-1, n_op_a, c0};
    replace_neighbor(n_op_a, v0, vb, c1);
    dead[t] = true;
    ++splits;
    return {c0, c1};
  }

  // Conforming bisection of triangle t across local edge l (Rivara):
  // recursively pre-refines the neighbor until the shared edge is also its
  // longest edge, then splits the pair.
  void bisect_edge(int t, int l, int depth = 0) {
    if (depth > 256) throw std::runtime_error("refine: bisection recursion exceeded cap");
    for (int guard = 0; guard < 1 << 20; ++guard) {
      const int va = tv[t][(l + 1) % 3], vb = tv[t][(l + 2) % 3];
      int n = nbr[t][l];
      if (n >= 0) {
        const int nl = local_edge_of(n, va, vb);
        if (longest_edge(n) != nl) {
          bisect_edge(n, longest_edge(n), depth + 1);
          l = local_edge_of(t, va, vb);  // neighbor pointer changed
          continue;
        }
        // Split both across the shared edge at its midpoint.
        const int vmid = (int)verts.size();
        verts.push_back(0.5 * (verts[va] + verts[vb]));
        auto [tc0, tc1] = split_one(t, l, vmid);
        const int nl2 = local_edge_of(n, va, vb);
        auto [nc0, nc1] = split_one(n, nl2, vmid);
        // Wire the four half-edge neighbors: t's half containing va faces n's
        // half containing va, and likewise for vb.
        const int n_va = tv[nc0][1];  // = (nl2+1)%3 corner of n
        if (n_va == va) {
          nbr[tc0][0] = nc0; nbr[nc0][0] = tc0;
          nbr[tc1][0] = nc1; nbr[nc1][0] = tc1;
        } else {
          nbr[tc0][0] = nc1; nbr[nc1][0] = tc0;
          nbr[tc1][0] = nc0; nbr[nc0][0] = tc1;
        }
      } else {
        const int vmid = (int)verts.size();
        verts.push_back(0.5 * (verts[va] + verts[vb]));
        auto [c0, c1] = split_one(t, l, vmid);
        nbr[c0][0] = -1;
        nbr[c1][0] = -1;
      }
      return;
    }
    throw std::runtime_error("refine: bisection loop exceeded cap");
  }

  void bisect_longest(int t) { bisect_edge(t, longest_edge(t)); }

  Mesh to_mesh() const {
    Mesh m;
    m.vertices = verts;
    for (int t = 0; t < (int)tv.size(); ++t)
      if (!dead[t]) m.tris.push_back(tv[t]);
    m.finalize();
    return m;
  }
};

}  // namespace

Mesh refine_graded(const Mesh& mesh, const SizeField& field) {
  if (!(field.h_max > 0.0)) throw std::invalid_argument("refine_graded: h_max must be positive");
  Refiner r(mesh);
  const long long cap = 4'000'000;
  bool changed = true;
  while (changed) {
    changed = false;
    const int nt = (int)r.tv.size();
    for (int t = 0; t < nt; ++t) {
      if (r.dead[t]) continue;
      double h2 = 0.0;
      for (int l = 0; l < 3; ++l)
        h2 = std::max(h2, r.len2(r.tv[t][(l + 1) % 3], r.tv[t][(l + 2) % 3]));
      const Vec2 c = (1.0 / 3.0) * (r.verts[r.tv[t][0]] + r.verts[r.tv[t][1]] +
                                    r.verts[r.tv[t][2]]);
      const double s = field.size_at(c);
      if (h2 > s * s) {
        r.bisect_longest(t);
        changed = true;
        if (r.splits > cap)
          throw std::runtime_error("refine_graded: refinement did not reach the size "
                                   "predicate within the split cap (element " +
                                   std::to_string(t) + ")");
      }
    }
  }
  return r.to_mesh();
}

Mesh steklov_fixup(const Mesh& mesh) {
  Mesh cur = mesh;
  for (int round = 0; round < 32; ++round) {
    if (cur.steklov_compatible()) return cur;
    Refiner r(cur);
    // Collect offending triangles in the *current* mesh, then fix each by
    // bisecting the edge opposite the corner vertex shared by its two
    // boundary edges (the unique interior edge for a corner cell).
    const int nt = (int)cur.tris.size();
    for (int t = 0; t < nt; ++t) {
      if (cur.boundary_edge_of_tri[t] != -2) continue;
      if (r.dead[t]) continue;  // already split as a neighbor of an earlier fix
      int interior_l = -1;
      int n_interior = 0;
      for (int l = 0; l < 3; ++l) {
        if (r.nbr[t][l] >= 0) {
          interior_l = l;
          ++n_interior;
        }
      }
      if (n_interior == 0)
        throw std::runtime_error("steklov_fixup: isolated triangle cannot be fixed");
      // With two boundary edges exactly one edge is interior; with three
      // boundary edges (single-triangle mesh) bisect the longest repeatedly.
      if (n_interior > 1) interior_l = r.longest_edge(t);
      r.bisect_edge(t, interior_l);
    }
    cur = r.to_mesh();
  }
  throw std::runtime_error("steklov_fixup: did not reach compatibility within the round cap");
}

void save_mesh_text(const Mesh& mesh, std::ostream& out) {
  char buf[64];
  out << mesh.n_vertices() << ' ' << mesh.n_tris() << ' ' << mesh.n_boundary_edges
      << '\n';
  for (const Vec2& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g", v.x, v.y);
    out << buf << '\n';
  }
  for (const auto& t : mesh.tris)
    out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& e : mesh.edges)
    if (e.marker != 0) out << e.v0 << ' ' << e.v1 << ' ' << e.marker << '\n';
}

Mesh load_mesh_text(std::istream& in) {
  int nv = 0, nt = 0, nb = 0;
  if (!(in >> nv >> nt >> nb)) throw std::runtime_error("mesh file: bad header");
  if (nv < 3 || nt < 1 || nb < 3) throw std::runtime_error("mesh file: implausible counts");
  Mesh m;
  m.vertices.resize(nv);
  for (auto& v : m.vertices)
    if (!(in >> v.x >> v.y)) throw std::runtime_error("mesh file: bad vertex line");
  m.tris.resize(nt);
  for (auto& t : m.tris)
    if (!(in >> t[0] >> t[1] >> t[2])) throw std::runtime_error("mesh file: bad triangle line");
  m.finalize();
  // Validate the declared boundary against the connectivity-derived one and
  // transfer markers.
  std::map<std::pair<int, int>, int> declared;
  for (int i = 0; i < nb; ++i) {
    int a, b, marker;
    if (!(in >> a >> b >> marker)) throw std::runtime_error("mesh file: bad boundary line");
    declared[std::minmax(a, b)] = marker;
  }
  int found = 0;
  for (auto& e : m.edges) {
    if (e.marker == 0) continue;
    auto it = declared.find({e.v0, e.v1});
    if (it == declared.end())
      throw std::runtime_error("mesh file: boundary edge missing from declaration");
    e.marker = it->second;
    ++found;
  }
  if (found != (int)declared.size())
    throw std::runtime_error("mesh file: declared boundary edge is interior");
  return m;
}

std::vector<Vec2> load_polygon_text(std::istream& in) {
  int n = 0;
  if (!(in >> n) || n < 4) throw std::runtime_error("polygon file: bad vertex count");
  std::vector<Vec2> poly(n);
  for (auto& p : poly)
    if (!(in >> p.x >> p.y)) throw std::runtime_error("polygon file: bad vertex line");
  check_rectilinear(poly);
  return poly;
}

namespace {

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file for reading: " + path);
  return in;
}

}  // namespace

void save_mesh_text(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  save_mesh_text(mesh, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Mesh load_mesh_text(const std::string& path) {
  std::ifstream in = open_for_read(path);
  return load_mesh_text(in);
}

std::vector<Vec2> load_polygon_text(const std::string& path) {
  std::ifstream in = open_for_read(path);
  return load_polygon_text(in);
}

}  // namespace eigbound
