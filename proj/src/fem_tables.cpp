#include <map>
#include <stdexcept>
#include <utility>

#include "eigbound/fem.hpp"

namespace eigbound {

namespace {

// Reference triangle vertices; barycentric coordinates as polynomials.
Poly2 lam(int i) {
  Poly2 x = Poly2::var_x();
  Poly2 y = Poly2::var_y();
  switch (i) {
    case 0:
      return Poly2::constant(Rat(1)) - x - y;
    case 1:
      return x;
    case 2:
      return y;
  }
  throw std::logic_error("barycentric index");
}

// Compose a bivariate polynomial with the straight-line parametrisation of
// local edge l: t=0 at local vertex (l+1)%3, t=1 at local vertex (l+2)%3.
Poly1 edge_restrict(const Poly2& f, int l) {
  // Reference vertices.
  const Rat vx[3] = {Rat(0), Rat(1), Rat(0)};
  const Rat vy[3] = {Rat(0), Rat(0), Rat(1)};
  int a = (l + 1) % 3, b = (l + 2) % 3;
  Poly1 t = Poly1::var();
  Poly1 xt = Poly1::constant(vx[a]) + (vx[b] - vx[a]) * t;
  Poly1 yt = Poly1::constant(vy[a]) + (vy[b] - vy[a]) * t;
  // Horner-free expansion via precomputed powers.
  int d = f.degree();
  std::vector<Poly1> xp(d + 1), yp(d + 1);
  xp[0] = Poly1::constant(Rat(1));
  yp[0] = Poly1::constant(Rat(1));
  for (int k = 1; k <= d; ++k) {
    xp[k] = xp[k - 1] * xt;
    yp[k] = yp[k - 1] * yt;
  }
  Poly1 r;
  for (int pa = 0; pa <= d; ++pa)
    for (int pb = 0; pa + pb <= d; ++pb) {
      const Rat& c = f.coeff(pa, pb);
      if (c.is_zero()) continue;
      r = r + c * (xp[pa] * yp[pb]);
    }
  return r;
}

std::vector<Interval> to_iv(const std::vector<Rat>& v) {
  std::vector<Interval> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].to_interval();
  return r;
}

ScalarRef build_scalar_ref(Space s) {
  ScalarRef ref;
  std::vector<Poly2> l = {lam(0), lam(1), lam(2)};
  Poly2 one = Poly2::constant(Rat(1));
  switch (s) {
    case Space::cg1:
    case Space::dg1:
      ref.basis = {l[0], l[1], l[2]};
      break;
    case Space::cg2:
    case Space::dg2:
      ref.basis.resize(6);
      for (int i = 0; i < 3; ++i)
        ref.basis[i] = l[i] * (Rat(2) * l[i] - one);
      for (int e = 0; e < 3; ++e)
        ref.basis[3 + e] = Rat(4) * (l[(e + 1) % 3] * l[(e + 2) % 3]);
      break;
    case Space::cg3:
    case Space::dg3:
      ref.basis.resize(10);
      for (int i = 0; i < 3; ++i)
        ref.basis[i] =
            Rat(1, 2) * (l[i] * (Rat(3) * l[i] - one) * (Rat(3) * l[i] - Rat(2) * one));
      for (int e = 0; e < 3; ++e) {
        int a = (e + 1) % 3, b = (e + 2) % 3;
        ref.basis[3 + 2 * e] = Rat(9, 2) * (l[a] * l[b] * (Rat(3) * l[a] - one));
        ref.basis[3 + 2 * e + 1] = Rat(9, 2) * (l[a] * l[b] * (Rat(3) * l[b] - one));
      }
      ref.basis[9] = Rat(27) * (l[0] * l[1] * l[2]);
      break;
    case Space::cr:
      ref.basis.resize(3);
      for (int e = 0; e < 3; ++e) ref.basis[e] = one - Rat(2) * l[e];
      break;
    case Space::dg0:
      ref.basis = {one};
      break;
    default:
      throw std::logic_error("not a scalar space");
  }
  ref.nloc = (int)ref.basis.size();

  // Edge-supported dofs, ordered: endpoint at t=0, endpoint at t=1, interior
  // nodes by ascending t. Only meaningful for the continuous families and cr.
  for (int e = 0; e < 3; ++e) {
    int a = (e + 1) % 3, b = (e + 2) % 3;
    switch (s) {
      case Space::cg1:
        ref.edge_dofs[e] = {a, b};
        break;
      case Space::cg2:
        ref.edge_dofs[e] = {a, b, 3 + e};
        break;
      case Space::cg3:
        ref.edge_dofs[e] = {a, b, 3 + 2 * e, 3 + 2 * e + 1};
        break;
      case Space::cr:
        ref.edge_dofs[e] = {e};
        break;
      default:
        break;
    }
  }

  for (int e = 0; e < 3; ++e) {
    ref.edge_trace[e].resize(ref.nloc);
    for (int k = 0; k < ref.nloc; ++k)
      ref.edge_trace[e][k] = edge_restrict(ref.basis[k], e);
  }

  int n = ref.nloc;
  ref.mass.assign(n * n, Rat());
  for (auto& g : ref.grad) g.assign(n * n, Rat());
  std::vector<Poly2> bx(n), by(n);
  for (int i = 0; i < n; ++i) {
    bx[i] = ref.basis[i].dx();
    by[i] = ref.basis[i].dy();
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      ref.mass[i * n + j] = (ref.basis[i] * ref.basis[j]).integral_ref_triangle();
      ref.grad[0][i * n + j] = (bx[i] * bx[j]).integral_ref_triangle();
      ref.grad[1][i * n + j] = (bx[i] * by[j]).integral_ref_triangle();
      ref.grad[2][i * n + j] = (by[i] * bx[j]).integral_ref_triangle();
      ref.grad[3][i * n + j] = (by[i] * by[j]).integral_ref_triangle();
    }
  }
  for (int e = 0; e < 3; ++e) {
    ref.edge_mass[e].assign(n * n, Rat());
    for (int i : ref.edge_dofs[e])
      for (int j : ref.edge_dofs[e])
        ref.edge_mass[e][i * n + j] =
            (ref.edge_trace[e][i] * ref.edge_trace[e][j]).integral_unit();
  }

  ref.mass_iv = to_iv(ref.mass);
  for (int k = 0; k < 4; ++k) ref.grad_iv[k] = to_iv(ref.grad[k]);
  for (int e = 0; e < 3; ++e) ref.edge_mass_iv[e] = to_iv(ref.edge_mass[e]);
  return ref;
}

// Curl of a scalar polynomial: (df/dy, -df/dx). Divergence-free fields.
std::array<Poly2, 2> curl(const Poly2& f) { return {f.dy(), -f.dx()}; }

std::array<Poly2, 2> whitney(int l) {
  int a = (l + 1) % 3, b = (l + 2) % 3;
  auto ca = curl(lam(a)), cb = curl(lam(b));
  return {lam(a) * cb[0] - lam(b) * ca[0], lam(a) * cb[1] - lam(b) * ca[1]};
}

// Extract the coefficient vector of a vector polynomial up to total degree d.
std::vector<Rat> coeff_vector(const std::array<Poly2, 2>& w, int d) {
  std::vector<Rat> v;
  v.reserve(2 * Poly2::size_of(d));
  for (int comp = 0; comp < 2; ++comp)
    for (int a = 0; a <= d; ++a)
      for (int b = 0; a + b <= d; ++b) v.push_back(w[comp].coeff(a, b));
  return v;
}

// Exact-rational row reduction rank test: returns true (and absorbs the row)
// when v is independent of the rows already in basis.
bool try_absorb(std::vector<std::vector<Rat>>& basis, std::vector<Rat> v) {
  for (const auto& row : basis) {
    // Eliminate with the pivot of this row.
    std::size_t p = 0;
    while (p < row.size() && row[p].is_zero()) ++p;
    if (p == row.size()) continue;
    if (!v[p].is_zero()) {
      Rat f = v[p] / row[p];
      for (std::size_t k = p; k < v.size(); ++k) v[k] -= f * row[k];
    }
  }
  for (const auto& c : v)
    if (!c.is_zero()) {
      basis.push_back(std::move(v));
      return true;
    }
  return false;
}

RTRef build_rt_ref(Space s) {
  int p = space_degree(s);
  RTRef ref;
  ref.per_edge = p + 1;
  ref.n_interior = p * (p + 1);
  ref.nloc = 3 * ref.per_edge + ref.n_interior;
  ref.basis.reserve(ref.nloc);

  // Edge functions: moments of increasing order with the universal scaled
  // traces 1, 1-2t, -(6t^2-6t+1) on the owning edge and zero trace elsewhere.
  for (int l = 0; l < 3; ++l) {
    int a = (l + 1) % 3, b = (l + 2) % 3;
    ref.basis.push_back(whitney(l));
    if (p >= 1) ref.basis.push_back(curl(lam(a) * lam(b)));
    if (p >= 2) ref.basis.push_back(curl(lam(a) * lam(b) * (lam(b) - lam(a))));
  }
  if (p == 1) {
    for (int l : {0, 1}) {
      auto w = whitney(l);
      ref.basis.push_back({lam(l) * w[0], lam(l) * w[1]});
    }
  } else if (p == 2) {
    // Greedy exact-rank selection from the zero-trace candidates
    // lam(m) * lam(l) * W_l (the three relations sum_l lam(l) W_l = 0 make
    // only six of the nine independent).
    std::vector<std::vector<Rat>> rows;
    for (const auto& w : ref.basis) rows.push_back(coeff_vector(w, 3));
    int picked = 0;
    for (int m = 0; m < 3 && picked < 6; ++m) {
      for (int l = 0; l < 3 && picked < 6; ++l) {
        auto w = whitney(l);
        std::array<Poly2, 2> cand = {lam(m) * (lam(l) * w[0]),
                                     lam(m) * (lam(l) * w[1])};
        if (try_absorb(rows, coeff_vector(cand, 3))) {
          ref.basis.push_back(cand);
          ++picked;
        }
      }
    }
    if (picked != 6) throw std::logic_error("interior selection rank deficit");
  }
  if ((int)ref.basis.size() != ref.nloc)
    throw std::logic_error("raviart-thomas basis count mismatch");

  ref.trace_poly.resize(ref.per_edge);
  Poly1 t = Poly1::var();
  Poly1 one1 = Poly1::constant(Rat(1));
  ref.trace_poly[0] = one1;
  if (p >= 1) ref.trace_poly[1] = one1 - Rat(2) * t;
  if (p >= 2)
    ref.trace_poly[2] = Rat(-1) * (Rat(6) * (t * t) - Rat(6) * t + one1);

  ref.div.resize(ref.nloc);
  for (int i = 0; i < ref.nloc; ++i)
    ref.div[i] = ref.basis[i][0].dx() + ref.basis[i][1].dy();

  int n = ref.nloc;
  for (auto& c : ref.comp_mass) c.assign(n * n, Rat());
  ref.div_div.assign(n * n, Rat());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      ref.comp_mass[0][i * n + j] =
          (ref.basis[i][0] * ref.basis[j][0]).integral_ref_triangle();
      ref.comp_mass[1][i * n + j] =
          (ref.basis[i][1] * ref.basis[j][1]).integral_ref_triangle();
      ref.comp_mass[2][i * n + j] =
          (ref.basis[i][0] * ref.basis[j][1]).integral_ref_triangle();
      ref.div_div[i * n + j] = (ref.div[i] * ref.div[j]).integral_ref_triangle();
    }

  for (int k = 0; k < 3; ++k) ref.comp_mass_iv[k] = to_iv(ref.comp_mass[k]);
  ref.div_div_iv = to_iv(ref.div_div);
  return ref;
}

}  // namespace

int space_degree(Space s) {
  switch (s) {
    case Space::cg1:
    case Space::dg1:
      return 1;
    case Space::cg2:
    case Space::dg2:
      return 2;
    case Space::cg3:
    case Space::dg3:
      return 3;
    case Space::cr:
      return 1;
    case Space::dg0:
    case Space::rt0:
      return 0;
    case Space::rt1:
      return 1;
    case Space::rt2:
      return 2;
  }
  throw std::logic_error("space_degree");
}

bool space_is_rt(Space s) {
  return s == Space::rt0 || s == Space::rt1 || s == Space::rt2;
}

bool space_is_dg(Space s) {
  return s == Space::dg0 || s == Space::dg1 || s == Space::dg2 || s == Space::dg3;
}

bool space_is_continuous(Space s) {
  return s == Space::cg1 || s == Space::cg2 || s == Space::cg3;
}

const ScalarRef& scalar_ref(Space s) {
  if (space_is_rt(s)) throw std::logic_error("scalar_ref on a vector space");
  static std::map<Space, ScalarRef> cache;
  auto it = cache.find(s);
  if (it == cache.end()) it = cache.emplace(s, build_scalar_ref(s)).first;
  return it->second;
}

const RTRef& rt_ref(Space s) {
  if (!space_is_rt(s)) throw std::logic_error("rt_ref on a scalar space");
  static std::map<Space, RTRef> cache;
  auto it = cache.find(s);
  if (it == cache.end()) it = cache.emplace(s, build_rt_ref(s)).first;
  return it->second;
}

const std::vector<Rat>& rt_div_dg_table(Space rt, Space dg) {
  if (!space_is_rt(rt) || !space_is_dg(dg)) throw std::logic_error("rt_div_dg_table spaces");
  static std::map<std::pair<Space, Space>, std::vector<Rat>> cache;
  auto key = std::make_pair(rt, dg);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const RTRef& r = rt_ref(rt);
    const ScalarRef& d = scalar_ref(dg);
    std::vector<Rat> tab(r.nloc * d.nloc);
    for (int i = 0; i < r.nloc; ++i)
      for (int j = 0; j < d.nloc; ++j)
        tab[i * d.nloc + j] = (r.div[i] * d.basis[j]).integral_ref_triangle();
    it = cache.emplace(key, std::move(tab)).first;
  }
  return it->second;
}

const std::vector<Rat>& scalar_dg_table(Space scalar, Space dg) {
  if (space_is_rt(scalar) || !space_is_dg(dg))
    throw std::logic_error("scalar_dg_table spaces");
  static std::map<std::pair<Space, Space>, std::vector<Rat>> cache;
  auto key = std::make_pair(scalar, dg);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const ScalarRef& a = scalar_ref(scalar);
    const ScalarRef& b = scalar_ref(dg);
    std::vector<Rat> tab(a.nloc * b.nloc);
    for (int i = 0; i < a.nloc; ++i)
      for (int j = 0; j < b.nloc; ++j)
        tab[i * b.nloc + j] = (a.basis[i] * b.basis[j]).integral_ref_triangle();
    it = cache.emplace(key, std::move(tab)).first;
  }
  return it->second;
}

}  // namespace eigbound
