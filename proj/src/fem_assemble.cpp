#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "eigbound/fem.hpp"

namespace eigbound {

namespace {

// Numeric policy shared by the floating-point and the interval assembly.
template <typename T>
struct Num;

template <>
struct Num<double> {
  static double table(const Interval& iv) { return iv.mid(); }
  static double point(double x) { return x; }
  static double root(double x) { return std::sqrt(x); }
};

template <>
struct Num<Interval> {
  static Interval table(const Interval& iv) { return iv; }
  static Interval point(double x) { return Interval(x); }
  static Interval root(const Interval& x) { return isqrt(x); }
};

template <typename T>
struct Geom {
  T j00, j10, j01, j11;  // columns (b-a), (c-a)
  T det;                 // 2 * area, positive for CCW elements
};

template <typename T>
Geom<T> make_geom(const Mesh& m, int t) {
  Vec2 a = m.vertices[m.tris[t][0]];
  Vec2 b = m.vertices[m.tris[t][1]];
  Vec2 c = m.vertices[m.tris[t][2]];
  Geom<T> g;
  g.j00 = Num<T>::point(b.x) - Num<T>::point(a.x);
  g.j10 = Num<T>::point(b.y) - Num<T>::point(a.y);
  g.j01 = Num<T>::point(c.x) - Num<T>::point(a.x);
  g.j11 = Num<T>::point(c.y) - Num<T>::point(a.y);
  g.det = g.j00 * g.j11 - g.j01 * g.j10;
  return g;
}

template <typename T>
using Trip = std::vector<std::pair<std::pair<int, int>, T>>;

template <typename T>
void scatter(Trip<T>& out, const DofMap& rows, const DofMap& cols, int t,
             const std::vector<T>& local) {
  int nr = rows.nloc, nc = cols.nloc;
  for (int i = 0; i < nr; ++i) {
    double si = rows.scale[t * nr + i];
    for (int j = 0; j < nc; ++j) {
      double sj = cols.scale[t * nc + j];
      T v = local[i * nc + j];
      if (si * sj < 0) v = -v;
      out.push_back({{rows.dofs[t * nr + i], cols.dofs[t * nc + j]}, v});
    }
  }
}

// Scalar-space form assembly shared across mass/stiffness variants.
enum class ScalarForm { grad_grad, mass, boundary_mass };

template <typename T>
SparseMat<T> assemble_scalar(const Mesh& m, const DofMap& dm, ScalarForm form) {
  const ScalarRef& ref = scalar_ref(dm.space);
  int n = ref.nloc;
  Trip<T> trips;
  trips.reserve((std::size_t)m.n_tris() * n * n);
  std::vector<T> local(n * n);
  for (int t = 0; t < m.n_tris(); ++t) {
    if (form == ScalarForm::boundary_mass) {
      bool any = false;
      for (int l = 0; l < 3; ++l)
        if (m.edges[m.tri_edges[t][l]].marker != 0) any = true;
      if (!any) continue;
    }
    Geom<T> g = make_geom<T>(m, t);
    switch (form) {
      case ScalarForm::grad_grad: {
        // adj(J) adj(J)^T / det contracted against the split gradient tables.
        T a00 = g.j11, a01 = -g.j01, a10 = -g.j10, a11 = g.j00;
        T g00 = a00 * a00 + a01 * a01;
        T g01 = a00 * a10 + a01 * a11;
        T g11 = a10 * a10 + a11 * a11;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            T s = g00 * Num<T>::table(ref.grad_iv[0][i * n + j]) +
                  g01 * (Num<T>::table(ref.grad_iv[1][i * n + j]) +
                         Num<T>::table(ref.grad_iv[2][i * n + j])) +
                  g11 * Num<T>::table(ref.grad_iv[3][i * n + j]);
            local[i * n + j] = s / g.det;
          }
        scatter(trips, dm, dm, t, local);
        break;
      }
      case ScalarForm::mass: {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            local[i * n + j] = g.det * Num<T>::table(ref.mass_iv[i * n + j]);
        scatter(trips, dm, dm, t, local);
        break;
      }
      case ScalarForm::boundary_mass: {
        std::fill(local.begin(), local.end(), T{});
        for (int l = 0; l < 3; ++l) {
          const auto& e = m.edges[m.tri_edges[t][l]];
          if (e.marker == 0) continue;
          Vec2 p0 = m.vertices[e.v0], p1 = m.vertices[e.v1];
          T dx = Num<T>::point(p1.x) - Num<T>::point(p0.x);
          T dy = Num<T>::point(p1.y) - Num<T>::point(p0.y);
          T len = Num<T>::root(dx * dx + dy * dy);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              const Interval& tab = ref.edge_mass_iv[l][i * n + j];
              if (tab.lo == 0.0 && tab.hi == 0.0) continue;
              local[i * n + j] += len * Num<T>::table(tab);
            }
        }
        scatter(trips, dm, dm, t, local);
        break;
      }
    }
  }
  return SparseMat<T>::from_triplets(dm.n_dofs, dm.n_dofs, std::move(trips));
}

enum class RTForm { rt_mass, div_div };

template <typename T>
SparseMat<T> assemble_rt(const Mesh& m, const DofMap& dm, RTForm form) {
  const RTRef& ref = rt_ref(dm.space);
  int n = ref.nloc;
  Trip<T> trips;
  trips.reserve((std::size_t)m.n_tris() * n * n);
  std::vector<T> local(n * n);
  for (int t = 0; t < m.n_tris(); ++t) {
    Geom<T> g = make_geom<T>(m, t);
    if (form == RTForm::rt_mass) {
      // Contravariant (Piola) transform: w = J w_ref / det.
      T s00 = g.j00 * g.j00 + g.j10 * g.j10;
      T s11 = g.j01 * g.j01 + g.j11 * g.j11;
      T s01 = g.j00 * g.j01 + g.j10 * g.j11;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          T s = s00 * Num<T>::table(ref.comp_mass_iv[0][i * n + j]) +
                s11 * Num<T>::table(ref.comp_mass_iv[1][i * n + j]) +
                s01 * (Num<T>::table(ref.comp_mass_iv[2][i * n + j]) +
                       Num<T>::table(ref.comp_mass_iv[2][j * n + i]));
          local[i * n + j] = s / g.det;
        }
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          local[i * n + j] = Num<T>::table(ref.div_div_iv[i * n + j]) / g.det;
    }
    scatter(trips, dm, dm, t, local);
  }
  return SparseMat<T>::from_triplets(dm.n_dofs, dm.n_dofs, std::move(trips));
}

template <typename T>
SparseMat<T> assemble_coupling(const Mesh& m, const DofMap& rows, const DofMap& cols,
                               const std::vector<Rat>& table, bool scale_by_det) {
  int nr = rows.nloc, nc = cols.nloc;
  std::vector<Interval> tab_iv(table.size());
  for (std::size_t k = 0; k < table.size(); ++k) tab_iv[k] = table[k].to_interval();
  Trip<T> trips;
  trips.reserve((std::size_t)m.n_tris() * nr * nc);
  std::vector<T> local(nr * nc);
  for (int t = 0; t < m.n_tris(); ++t) {
    if (scale_by_det) {
      Geom<T> g = make_geom<T>(m, t);
      for (int k = 0; k < nr * nc; ++k)
        local[k] = g.det * Num<T>::table(tab_iv[k]);
    } else {
      for (int k = 0; k < nr * nc; ++k) local[k] = Num<T>::table(tab_iv[k]);
    }
    scatter(trips, rows, cols, t, local);
  }
  return SparseMat<T>::from_triplets(rows.n_dofs, cols.n_dofs, std::move(trips));
}

}  // namespace

template <typename T>
SparseMat<T> SparseMat<T>::from_triplets(
    int rows, int cols, std::vector<std::pair<std::pair<int, int>, T>>&& t) {
  std::sort(t.begin(), t.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseMat<T> m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  std::size_t out = 0;
  for (std::size_t k = 0; k < t.size();) {
    std::size_t k2 = k;
    T s = t[k].second;
    for (++k2; k2 < t.size() && t[k2].first == t[k].first; ++k2) s += t[k2].second;
    t[out].first = t[k].first;
    t[out].second = s;
    ++out;
    k = k2;
  }
  m.col_idx.resize(out);
  m.val.resize(out);
  for (std::size_t k = 0; k < out; ++k) {
    ++m.row_ptr[t[k].first.first + 1];
    m.col_idx[k] = t[k].first.second;
    m.val[k] = t[k].second;
  }
  for (int r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

template <typename T>
T SparseMat<T>::at(int i, int j) const {
  for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
    if (col_idx[k] == j) return val[k];
  return T{};
}

template <typename T>
std::vector<T> SparseMat<T>::to_dense() const {
  std::vector<T> d((std::size_t)rows * cols, T{});
  for (int i = 0; i < rows; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      d[(std::size_t)i * cols + col_idx[k]] = val[k];
  return d;
}

template struct SparseMat<double>;
template struct SparseMat<Interval>;

template <typename T>
SparseMat<T> restrict_map(const SparseMat<T>& m, const std::vector<int>& row_map,
                          int new_rows, const std::vector<int>& col_map, int new_cols) {
  Trip<T> trips;
  for (int i = 0; i < m.rows; ++i) {
    if (row_map[i] < 0) continue;
    for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k) {
      int j = col_map[m.col_idx[k]];
      if (j < 0) continue;
      trips.push_back({{row_map[i], j}, m.val[k]});
    }
  }
  return SparseMat<T>::from_triplets(new_rows, new_cols, std::move(trips));
}

template SparseMat<double> restrict_map(const SparseMat<double>&, const std::vector<int>&,
                                        int, const std::vector<int>&, int);
template SparseMat<Interval> restrict_map(const SparseMat<Interval>&,
                                          const std::vector<int>&, int,
                                          const std::vector<int>&, int);

template <typename T>
SparseMat<T> sparse_sum(const SparseMat<T>& x, const SparseMat<T>& y) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw std::invalid_argument("sparse sum shape mismatch");
  Trip<T> trips;
  trips.reserve(x.nnz() + y.nnz());
  for (int i = 0; i < x.rows; ++i)
    for (int k = x.row_ptr[i]; k < x.row_ptr[i + 1]; ++k)
      trips.push_back({{i, x.col_idx[k]}, x.val[k]});
  for (int i = 0; i < y.rows; ++i)
    for (int k = y.row_ptr[i]; k < y.row_ptr[i + 1]; ++k)
      trips.push_back({{i, y.col_idx[k]}, y.val[k]});
  return SparseMat<T>::from_triplets(x.rows, x.cols, std::move(trips));
}

template SparseMat<double> sparse_sum(const SparseMat<double>&, const SparseMat<double>&);
template SparseMat<Interval> sparse_sum(const SparseMat<Interval>&, const SparseMat<Interval>&);

DofMap build_dofmap(const Mesh& m, Space s) {
  if (!m.finalized()) throw std::logic_error("dofmap on non-finalized mesh");
  DofMap dm;
  dm.space = s;
  int nv = m.n_vertices(), ne = m.n_edges(), nt = m.n_tris();

  std::vector<char> bvert(nv, 0);
  for (const auto& e : m.edges)
    if (e.marker != 0) bvert[e.v0] = bvert[e.v1] = 1;

  auto alloc = [&](int nloc, int ndofs) {
    dm.nloc = nloc;
    dm.n_dofs = ndofs;
    dm.dofs.assign((std::size_t)nt * nloc, -1);
    dm.scale.assign((std::size_t)nt * nloc, 1.0);
    dm.boundary.assign(ndofs, 0);
  };

  switch (s) {
    case Space::cg1: {
      alloc(3, nv);
      for (int t = 0; t < nt; ++t)
        for (int k = 0; k < 3; ++k) dm.dofs[t * 3 + k] = m.tris[t][k];
      for (int v = 0; v < nv; ++v) dm.boundary[v] = bvert[v];
      break;
    }
    case Space::cg2: {
      alloc(6, nv + ne);
      for (int t = 0; t < nt; ++t) {
        for (int k = 0; k < 3; ++k) dm.dofs[t * 6 + k] = m.tris[t][k];
        for (int l = 0; l < 3; ++l) dm.dofs[t * 6 + 3 + l] = nv + m.tri_edges[t][l];
      }
      for (int v = 0; v < nv; ++v) dm.boundary[v] = bvert[v];
      for (int e = 0; e < ne; ++e) dm.boundary[nv + e] = m.edges[e].marker != 0;
      break;
    }
    case Space::cg3: {
      alloc(10, nv + 2 * ne + nt);
      for (int t = 0; t < nt; ++t) {
        for (int k = 0; k < 3; ++k) dm.dofs[t * 10 + k] = m.tris[t][k];
        for (int l = 0; l < 3; ++l) {
          int e = m.tri_edges[t][l];
          bool asc = m.tri_edge_asc[t][l];
          // Global edge nodes are ordered from the smaller vertex id; the
          // local pair is ordered along the element's traversal.
          dm.dofs[t * 10 + 3 + 2 * l] = nv + 2 * e + (asc ? 0 : 1);
          dm.dofs[t * 10 + 3 + 2 * l + 1] = nv + 2 * e + (asc ? 1 : 0);
        }
        dm.dofs[t * 10 + 9] = nv + 2 * ne + t;
      }
      for (int v = 0; v < nv; ++v) dm.boundary[v] = bvert[v];
      for (int e = 0; e < ne; ++e)
        if (m.edges[e].marker != 0)
          dm.boundary[nv + 2 * e] = dm.boundary[nv + 2 * e + 1] = 1;
      break;
    }
    case Space::cr: {
      alloc(3, ne);
      for (int t = 0; t < nt; ++t)
        for (int l = 0; l < 3; ++l) dm.dofs[t * 3 + l] = m.tri_edges[t][l];
      for (int e = 0; e < ne; ++e) dm.boundary[e] = m.edges[e].marker != 0;
      break;
    }
    case Space::dg0:
    case Space::dg1:
    case Space::dg2:
    case Space::dg3: {
      int nloc = scalar_ref(s).nloc;
      alloc(nloc, nt * nloc);
      for (int t = 0; t < nt; ++t)
        for (int k = 0; k < nloc; ++k) dm.dofs[t * nloc + k] = t * nloc + k;
      break;
    }
    case Space::rt0:
    case Space::rt1:
    case Space::rt2: {
      const RTRef& ref = rt_ref(s);
      int pe = ref.per_edge;
      alloc(ref.nloc, pe * ne + ref.n_interior * nt);
      // Orientation flip per moment order under reversal of the edge
      // parametrisation: the traces 1, 1-2t, -(6t^2-6t+1) are even, odd,
      // even in t -> 1-t, giving factors -1, +1, -1 for descending edges.
      const double flip[3] = {-1.0, 1.0, -1.0};
      for (int t = 0; t < nt; ++t) {
        for (int l = 0; l < 3; ++l) {
          int e = m.tri_edges[t][l];
          bool asc = m.tri_edge_asc[t][l];
          for (int k = 0; k < pe; ++k) {
            dm.dofs[t * ref.nloc + l * pe + k] = pe * e + k;
            dm.scale[t * ref.nloc + l * pe + k] = asc ? 1.0 : flip[k];
          }
        }
        for (int i = 0; i < ref.n_interior; ++i)
          dm.dofs[t * ref.nloc + 3 * pe + i] = pe * ne + ref.n_interior * t + i;
      }
      for (int e = 0; e < ne; ++e)
        if (m.edges[e].marker != 0)
          for (int k = 0; k < pe; ++k) dm.boundary[pe * e + k] = 1;
      break;
    }
  }
  return dm;
}

std::vector<int> interior_map(const DofMap& dm) {
  std::vector<int> map(dm.n_dofs, -1);
  int next = 0;
  for (int i = 0; i < dm.n_dofs; ++i)
    if (!dm.boundary[i]) map[i] = next++;
  return map;
}

int count_interior(const DofMap& dm) {
  int n = 0;
  for (int i = 0; i < dm.n_dofs; ++i)
    if (!dm.boundary[i]) ++n;
  return n;
}

SparseD assemble_grad_grad(const Mesh& m, const DofMap& dm) {
  return assemble_scalar<double>(m, dm, ScalarForm::grad_grad);
}
SparseI assemble_grad_grad_iv(const Mesh& m, const DofMap& dm) {
  return assemble_scalar<Interval>(m, dm, ScalarForm::grad_grad);
}
SparseD assemble_mass(const Mesh& m, const DofMap& dm) {
  return assemble_scalar<double>(m, dm, ScalarForm::mass);
}
SparseI assemble_mass_iv(const Mesh& m, const DofMap& dm) {
  return assemble_scalar<Interval>(m, dm, ScalarForm::mass);
}
SparseD assemble_boundary_mass(const Mesh& m, const DofMap& dm) {
  return assemble_scalar<double>(m, dm, ScalarForm::boundary_mass);
}
SparseI assemble_boundary_mass_iv(const Mesh& m, const DofMap& dm) {
  return assemble_scalar<Interval>(m, dm, ScalarForm::boundary_mass);
}
SparseD assemble_rt_mass(const Mesh& m, const DofMap& dm) {
  return assemble_rt<double>(m, dm, RTForm::rt_mass);
}
SparseI assemble_rt_mass_iv(const Mesh& m, const DofMap& dm) {
  return assemble_rt<Interval>(m, dm, RTForm::rt_mass);
}
SparseD assemble_div_div(const Mesh& m, const DofMap& dm) {
  return assemble_rt<double>(m, dm, RTForm::div_div);
}
SparseI assemble_div_div_iv(const Mesh& m, const DofMap& dm) {
  return assemble_rt<Interval>(m, dm, RTForm::div_div);
}
SparseD assemble_rt_div_dg(const Mesh& m, const DofMap& rt, const DofMap& dg) {
  return assemble_coupling<double>(m, rt, dg, rt_div_dg_table(rt.space, dg.space),
                                   false);
}
SparseI assemble_rt_div_dg_iv(const Mesh& m, const DofMap& rt, const DofMap& dg) {
  return assemble_coupling<Interval>(m, rt, dg, rt_div_dg_table(rt.space, dg.space),
                                     false);
}
SparseD assemble_scalar_dg(const Mesh& m, const DofMap& sc, const DofMap& dg) {
  return assemble_coupling<double>(m, sc, dg, scalar_dg_table(sc.space, dg.space),
                                   true);
}
SparseI assemble_scalar_dg_iv(const Mesh& m, const DofMap& sc, const DofMap& dg) {
  return assemble_coupling<Interval>(m, sc, dg, scalar_dg_table(sc.space, dg.space),
                                     true);
}

namespace {

// Double-precision coefficient snapshot of a rational polynomial for fast
// pointwise evaluation (tests and quadrature-based diagnostics only).
struct DPoly {
  int deg = 0;
  std::vector<double> c;
  double eval(double x, double y) const {
    double s = 0.0;
    double xp = 1.0;
    for (int a = 0; a <= deg; ++a) {
      double yp = 1.0;
      for (int b = 0; a + b <= deg; ++b) {
        double cc = c[Poly2::index(a, b)];
        if (cc != 0.0) s += cc * xp * yp;
        yp *= y;
      }
      xp *= x;
    }
    return s;
  }
};

DPoly snapshot(const Poly2& p) {
  DPoly d;
  d.deg = p.degree();
  d.c.resize(Poly2::size_of(d.deg));
  for (int a = 0; a <= d.deg; ++a)
    for (int b = 0; a + b <= d.deg; ++b)
      d.c[Poly2::index(a, b)] = p.coeff(a, b).to_interval().mid();
  return d;
}

struct EvalCache {
  std::vector<DPoly> val, gx, gy;       // scalar spaces
  std::vector<DPoly> rx, ry, rdiv;      // rt spaces
};

const EvalCache& eval_cache(Space s) {
  static std::map<Space, EvalCache> cache;
  auto it = cache.find(s);
  if (it != cache.end()) return it->second;
  EvalCache ec;
  if (space_is_rt(s)) {
    const RTRef& r = rt_ref(s);
    for (int k = 0; k < r.nloc; ++k) {
      ec.rx.push_back(snapshot(r.basis[k][0]));
      ec.ry.push_back(snapshot(r.basis[k][1]));
      ec.rdiv.push_back(snapshot(r.div[k]));
    }
  } else {
    const ScalarRef& r = scalar_ref(s);
    for (int k = 0; k < r.nloc; ++k) {
      ec.val.push_back(snapshot(r.basis[k]));
      ec.gx.push_back(snapshot(r.basis[k].dx()));
      ec.gy.push_back(snapshot(r.basis[k].dy()));
    }
  }
  return cache.emplace(s, std::move(ec)).first->second;
}

}  // namespace

double eval_scalar_basis(Space s, int k, double x, double y) {
  return eval_cache(s).val.at(k).eval(x, y);
}

Vec2 eval_scalar_grad(Space s, int k, double x, double y) {
  const EvalCache& ec = eval_cache(s);
  return {ec.gx.at(k).eval(x, y), ec.gy.at(k).eval(x, y)};
}

Vec2 eval_rt_basis(Space s, int k, double x, double y) {
  const EvalCache& ec = eval_cache(s);
  return {ec.rx.at(k).eval(x, y), ec.ry.at(k).eval(x, y)};
}

double eval_rt_div(Space s, int k, double x, double y) {
  return eval_cache(s).rdiv.at(k).eval(x, y);
}

}  // namespace eigbound
