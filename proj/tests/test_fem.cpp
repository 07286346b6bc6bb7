#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "eigbound/fem.hpp"
#include "eigbound/quadrature.hpp"

using namespace eigbound;

namespace {

Mesh reference_triangle() {
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {0, 1}};
  m.tris = {{0, 1, 2}};
  m.finalize();
  return m;
}

// Nodal interpolation of a callable into a scalar Lagrange space, exact for
// polynomials the space contains.
template <typename F>
std::vector<double> interpolate(const Mesh& m, const DofMap& dm, F f) {
  const ScalarRef& ref = scalar_ref(dm.space);
  std::vector<double> u(dm.n_dofs, 0.0);
  // Evaluate at the nodal point of each local dof: recover the point from
  // the basis (Lagrange property): node of dof k is where basis k equals 1.
  // Hardcode the reference node layout instead.
  std::vector<Vec2> nodes;
  switch (dm.space) {
    case Space::cg1:
      nodes = {{0, 0}, {1, 0}, {0, 1}};
      break;
    case Space::cg2:
      nodes = {{0, 0}, {1, 0}, {0, 1}, {0.5, 0.5}, {0, 0.5}, {0.5, 0}};
      break;
    case Space::cg3:
      nodes = {{0, 0},           {1, 0},           {0, 1},
               {2.0 / 3, 1.0 / 3}, {1.0 / 3, 2.0 / 3},
               {0, 2.0 / 3},       {0, 1.0 / 3},
               {1.0 / 3, 0},       {2.0 / 3, 0},
               {1.0 / 3, 1.0 / 3}};
      break;
    case Space::cr:
      nodes = {{0.5, 0.5}, {0, 0.5}, {0.5, 0}};
      break;
    default:
      REQUIRE(false);
  }
  REQUIRE((int)nodes.size() == ref.nloc);
  for (int t = 0; t < m.n_tris(); ++t) {
    Vec2 a = m.vertices[m.tris[t][0]];
    Vec2 b = m.vertices[m.tris[t][1]];
    Vec2 c = m.vertices[m.tris[t][2]];
    for (int k = 0; k < ref.nloc; ++k) {
      Vec2 p = a + nodes[k].x * (b - a) + nodes[k].y * (c - a);
      u[dm.dofs[t * ref.nloc + k]] = f(p);
    }
  }
  return u;
}

double quad_form(const SparseD& A, const std::vector<double>& u,
                 const std::vector<double>& v) {
  double s = 0.0;
  for (int i = 0; i < A.rows; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      s += u[i] * A.val[k] * v[A.col_idx[k]];
  return s;
}

bool iv_contains_matrix(const SparseI& I, const SparseD& D) {
  if (I.rows != D.rows || I.cols != D.cols) return false;
  for (int i = 0; i < D.rows; ++i)
    for (int k = D.row_ptr[i]; k < D.row_ptr[i + 1]; ++k) {
      // The double entry is a rounded version of the exact one; it must lie
      // within one ulp of the interval hull.
      Interval iv = I.at(i, D.col_idx[k]);
      double v = D.val[k];
      double pad = 2e-15 * (std::fabs(v) + 1.0);
      if (v < iv.lo - pad || v > iv.hi + pad) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("reference stiffness and mass tables for linear elements", "[fem]") {
  Mesh m = reference_triangle();
  DofMap dm = build_dofmap(m, Space::cg1);
  REQUIRE(dm.n_dofs == 3);
  SparseD K = assemble_grad_grad(m, dm);
  // Frozen analytic values for the unit right triangle.
  CHECK(K.at(0, 0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(K.at(0, 1) == Catch::Approx(-0.5).margin(1e-15));
  CHECK(K.at(0, 2) == Catch::Approx(-0.5).margin(1e-15));
  CHECK(K.at(1, 1) == Catch::Approx(0.5).margin(1e-15));
  CHECK(K.at(1, 2) == Catch::Approx(0.0).margin(1e-15));
  CHECK(K.at(2, 2) == Catch::Approx(0.5).margin(1e-15));

  SparseD M = assemble_mass(m, dm);
  CHECK(M.at(0, 0) == Catch::Approx(2.0 / 24).margin(1e-16));
  CHECK(M.at(0, 1) == Catch::Approx(1.0 / 24).margin(1e-16));
  CHECK(M.at(1, 1) == Catch::Approx(2.0 / 24).margin(1e-16));
  CHECK(M.at(1, 2) == Catch::Approx(1.0 / 24).margin(1e-16));
}

TEST_CASE("five point stencil emerges on the uniform square", "[fem]") {
  Mesh m = uniform_square(2);
  DofMap dm = build_dofmap(m, Space::cg1);
  auto imap = interior_map(dm);
  int ni = count_interior(dm);
  REQUIRE(ni == 1);
  SparseD K = restrict_map(assemble_grad_grad(m, dm), imap, ni, imap, ni);
  CHECK(K.at(0, 0) == Catch::Approx(4.0).margin(1e-14));
  SparseD M = restrict_map(assemble_mass(m, dm), imap, ni, imap, ni);
  CHECK(M.at(0, 0) == Catch::Approx(0.125).margin(1e-15));
}

TEST_CASE("nonconforming space counts and mass", "[fem]") {
  Mesh m = uniform_square(2);
  DofMap dm = build_dofmap(m, Space::cr);
  CHECK(dm.n_dofs == m.n_edges());
  CHECK(count_interior(dm) == 8);
  // Element mass of the edge-midpoint space is diagonal: area/3.
  Mesh r = reference_triangle();
  DofMap dr = build_dofmap(r, Space::cr);
  SparseD M = assemble_mass(r, dr);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(M.at(i, j) == Catch::Approx(i == j ? 1.0 / 6 : 0.0).margin(1e-16));
    }
  }
}

TEST_CASE("mass matrices integrate interpolants exactly", "[fem]") {
  auto ls = template_domain(DomainKind::lshape);
  Mesh m = triangulate_rectilinear(ls, 0.6);
  for (Space s : {Space::cg1, Space::cg2, Space::cg3, Space::cr}) {
    DofMap dm = build_dofmap(m, s);
    SparseD M = assemble_mass(m, dm);
    auto ones = interpolate(m, dm, [](Vec2) { return 1.0; });
    auto xs = interpolate(m, dm, [](Vec2 p) { return p.x; });
    // integral of 1 over the L domain = 3, of x = 2.5.
    CHECK(quad_form(M, ones, ones) == Catch::Approx(3.0).epsilon(1e-12));
    CHECK(quad_form(M, xs, ones) == Catch::Approx(2.5).epsilon(1e-12));
    SparseD B = assemble_boundary_mass(m, dm);
    CHECK(quad_form(B, ones, ones) == Catch::Approx(8.0).epsilon(1e-12));
  }
}

TEST_CASE("stiffness matrices integrate gradients of interpolants", "[fem]") {
  Mesh m = uniform_square(3);
  for (Space s : {Space::cg1, Space::cg2, Space::cg3, Space::cr}) {
    DofMap dm = build_dofmap(m, s);
    SparseD K = assemble_grad_grad(m, dm);
    auto xs = interpolate(m, dm, [](Vec2 p) { return p.x; });
    CHECK(quad_form(K, xs, xs) == Catch::Approx(1.0).epsilon(1e-12));
    auto ones = interpolate(m, dm, [](Vec2) { return 1.0; });
    CHECK(std::fabs(quad_form(K, ones, ones)) < 1e-12);
  }
  // Quadratic reproduction: |grad(x^2)|^2 integrates to 4/3 on the square.
  DofMap dm2 = build_dofmap(m, Space::cg2);
  SparseD K2 = assemble_grad_grad(m, dm2);
  auto x2 = interpolate(m, dm2, [](Vec2 p) { return p.x * p.x; });
  CHECK(quad_form(K2, x2, x2) == Catch::Approx(4.0 / 3).epsilon(1e-12));
  DofMap dm3 = build_dofmap(m, Space::cg3);
  SparseD K3 = assemble_grad_grad(m, dm3);
  auto x3 = interpolate(m, dm3, [](Vec2 p) { return p.x * p.x * p.x; });
  // integral of |3x^2|^2 = 9/5 on the unit square.
  CHECK(quad_form(K3, x3, x3) == Catch::Approx(9.0 / 5).epsilon(1e-12));
}

TEST_CASE("interval assembly encloses the floating point assembly", "[fem]") {
  auto ls = template_domain(DomainKind::lshape);
  SizeField f;
  f.corners = reentrant_corners(DomainKind::lshape);
  f.h_max = 0.5;
  Mesh m = refine_graded(triangulate_rectilinear(ls, 0.5), f);
  for (Space s : {Space::cg2, Space::cr}) {
    DofMap dm = build_dofmap(m, s);
    CHECK(iv_contains_matrix(assemble_grad_grad_iv(m, dm), assemble_grad_grad(m, dm)));
    CHECK(iv_contains_matrix(assemble_mass_iv(m, dm), assemble_mass(m, dm)));
    CHECK(iv_contains_matrix(assemble_boundary_mass_iv(m, dm),
                             assemble_boundary_mass(m, dm)));
  }
  DofMap rt = build_dofmap(m, Space::rt1);
  CHECK(iv_contains_matrix(assemble_rt_mass_iv(m, rt), assemble_rt_mass(m, rt)));
  CHECK(iv_contains_matrix(assemble_div_div_iv(m, rt), assemble_div_div(m, rt)));
  DofMap dg = build_dofmap(m, Space::dg1);
  CHECK(iv_contains_matrix(assemble_rt_div_dg_iv(m, rt, dg),
                           assemble_rt_div_dg(m, rt, dg)));
  // Interval widths stay tiny on exact dyadic-ish geometry.
  SparseI KI = assemble_grad_grad_iv(m, build_dofmap(m, Space::cg2));
  double wmax = 0.0;
  for (const auto& v : KI.val) wmax = std::max(wmax, v.width());
  CHECK(wmax < 1e-12);
}

TEST_CASE("raviart thomas divergence is compatible with dg spaces", "[fem]") {
  Mesh m = uniform_square(2);
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (auto [rts, dgs] : {std::pair{Space::rt0, Space::dg0},
                          std::pair{Space::rt1, Space::dg1},
                          std::pair{Space::rt2, Space::dg2}}) {
    DofMap rt = build_dofmap(m, rts);
    DofMap dg = build_dofmap(m, dgs);
    SparseD B = assemble_rt_div_dg(m, rt, dg);
    SparseD Mdg = assemble_mass(m, dg);
    std::vector<double> w(rt.n_dofs);
    for (auto& v : w) v = U(rng);
    // Project div w onto the dg space: solve Mdg d = B^T w elementwise (the
    // dg mass is block diagonal; use dense solve per element block).
    std::vector<double> rhs(dg.n_dofs, 0.0);
    for (int i = 0; i < B.rows; ++i)
      for (int k = B.row_ptr[i]; k < B.row_ptr[i + 1]; ++k)
        rhs[B.col_idx[k]] += B.val[k] * w[i];
    // Block solve via Gaussian elimination per element.
    int nl = dg.nloc;
    std::vector<double> d(dg.n_dofs, 0.0);
    for (int t = 0; t < m.n_tris(); ++t) {
      std::vector<double> A(nl * nl);
      std::vector<double> b(nl);
      for (int i = 0; i < nl; ++i) {
        int gi = dg.dofs[t * nl + i];
        b[i] = rhs[gi];
        for (int j = 0; j < nl; ++j) A[i * nl + j] = Mdg.at(gi, dg.dofs[t * nl + j]);
      }
      for (int c = 0; c < nl; ++c) {
        int p = c;
        for (int r2 = c + 1; r2 < nl; ++r2)
          if (std::fabs(A[r2 * nl + c]) > std::fabs(A[p * nl + c])) p = r2;
        for (int j = 0; j < nl; ++j) std::swap(A[c * nl + j], A[p * nl + j]);
        std::swap(b[c], b[p]);
        for (int r2 = c + 1; r2 < nl; ++r2) {
          double fct = A[r2 * nl + c] / A[c * nl + c];
          for (int j = c; j < nl; ++j) A[r2 * nl + j] -= fct * A[c * nl + j];
          b[r2] -= fct * b[c];
        }
      }
      for (int c = nl - 1; c >= 0; --c) {
        double s = b[c];
        for (int j = c + 1; j < nl; ++j) s -= A[c * nl + j] * d[dg.dofs[t * nl + j]];
        d[dg.dofs[t * nl + c]] = s / A[c * nl + c];
      }
    }
    // Pointwise: div w equals its dg projection (div lives in the dg space).
    TriQuad q = tri_quadrature(4);
    for (int t = 0; t < m.n_tris(); ++t) {
      Vec2 a = m.vertices[m.tris[t][0]];
      Vec2 b2 = m.vertices[m.tris[t][1]];
      Vec2 c2 = m.vertices[m.tris[t][2]];
      double det = cross(b2 - a, c2 - a);
      for (std::size_t qp = 0; qp < q.pts.size(); ++qp) {
        double divw = 0.0, dval = 0.0;
        for (int k = 0; k < rt.nloc; ++k) {
          double coef = w[rt.dofs[t * rt.nloc + k]] * rt.scale[t * rt.nloc + k];
          divw += coef * eval_rt_div(rts, k, q.pts[qp].x, q.pts[qp].y) / det;
        }
        for (int k = 0; k < nl; ++k)
          dval += d[dg.dofs[t * nl + k]] *
                  eval_scalar_basis(dgs, k, q.pts[qp].x, q.pts[qp].y);
        REQUIRE(divw == Catch::Approx(dval).margin(1e-10));
      }
    }
  }
}

TEST_CASE("raviart thomas functions are hdiv conforming", "[fem]") {
  // Zero normal trace on the boundary plus the divergence theorem: if all
  // boundary edge dofs vanish, the total divergence integral is zero.
  auto ls = template_domain(DomainKind::lshape);
  Mesh m = triangulate_rectilinear(ls, 0.7);
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (Space rts : {Space::rt0, Space::rt1, Space::rt2}) {
    DofMap rt = build_dofmap(m, rts);
    DofMap dg0 = build_dofmap(m, Space::dg0);
    SparseD B = assemble_rt_div_dg(m, rt, dg0);
    std::vector<double> w(rt.n_dofs);
    for (auto& v : w) v = U(rng);
    for (int i = 0; i < rt.n_dofs; ++i)
      if (rt.boundary[i]) w[i] = 0.0;
    double total_div = 0.0;
    for (int i = 0; i < B.rows; ++i)
      for (int k = B.row_ptr[i]; k < B.row_ptr[i + 1]; ++k)
        total_div += B.val[k] * w[i];
    CHECK(std::fabs(total_div) < 1e-11);

    // Normal-flux continuity across interior edges, checked by quadrature
    // from both sides at matched physical points.
    EdgeQuad eq = edge_quadrature(4);
    int checked = 0;
    for (int e = 0; e < m.n_edges() && checked < 40; ++e) {
      const auto& ed = m.edges[e];
      if (ed.t1 < 0) continue;
      ++checked;
      Vec2 p0 = m.vertices[ed.v0], p1 = m.vertices[ed.v1];
      Vec2 tangent = p1 - p0;
      Vec2 nrm{tangent.y, -tangent.x};  // fixed edge normal (unnormalised)
      for (std::size_t qi = 0; qi < eq.t.size(); ++qi) {
        Vec2 phys = p0 + eq.t[qi] * tangent;
        double flux[2];
        int side = 0;
        for (int t : {ed.t0, ed.t1}) {
          Vec2 a = m.vertices[m.tris[t][0]];
          Vec2 b2 = m.vertices[m.tris[t][1]];
          Vec2 c2 = m.vertices[m.tris[t][2]];
          double det = cross(b2 - a, c2 - a);
          // Reference coordinates of the physical point.
          double rx = (cross(phys - a, c2 - a)) / det;
          double ry = (cross(b2 - a, phys - a)) / det;
          // w = (1/det) J w_ref under the contravariant map.
          double wx = 0.0, wy = 0.0;
          for (int k = 0; k < rt.nloc; ++k) {
            double coef = w[rt.dofs[t * rt.nloc + k]] * rt.scale[t * rt.nloc + k];
            Vec2 wr = eval_rt_basis(rts, k, rx, ry);
            wx += coef * ((b2.x - a.x) * wr.x + (c2.x - a.x) * wr.y) / det;
            wy += coef * ((b2.y - a.y) * wr.x + (c2.y - a.y) * wr.y) / det;
          }
          flux[side++] = wx * nrm.x + wy * nrm.y;
        }
        REQUIRE(flux[0] == Catch::Approx(flux[1]).margin(1e-10));
      }
    }
    REQUIRE(checked > 0);
  }
}

TEST_CASE("scalar dg coupling integrates products", "[fem]") {
  Mesh m = uniform_square(3);
  DofMap cg = build_dofmap(m, Space::cg2);
  DofMap dg = build_dofmap(m, Space::dg0);
  SparseD C = assemble_scalar_dg(m, cg, dg);
  auto x2 = interpolate(m, cg, [](Vec2 p) { return p.x * p.x; });
  std::vector<double> ones(dg.n_dofs, 1.0);
  double s = 0.0;
  for (int i = 0; i < C.rows; ++i)
    for (int k = C.row_ptr[i]; k < C.row_ptr[i + 1]; ++k)
      s += x2[i] * C.val[k];
  CHECK(s == Catch::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("dirichlet reduction drops exactly the boundary dofs", "[fem]") {
  Mesh m = uniform_square(4);
  DofMap c2 = build_dofmap(m, Space::cg2);
  // 25 vertices + 56 edges; boundary: 16 vertices + 16 edges.
  CHECK(c2.n_dofs == 25 + 56);
  CHECK(count_interior(c2) == (25 - 16) + (56 - 16));
  DofMap c3 = build_dofmap(m, Space::cg3);
  CHECK(c3.n_dofs == 25 + 2 * 56 + 32);
  CHECK(count_interior(c3) == 9 + 2 * 40 + 32);
}

TEST_CASE("quadrature rules integrate monomials exactly", "[quadrature]") {
  for (int d = 1; d <= 8; ++d) {
    TriQuad q = tri_quadrature(d);
    for (int a = 0; a + 0 <= d; ++a) {
      for (int b = 0; a + b <= d; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < q.pts.size(); ++i)
          s += q.wts[i] * std::pow(q.pts[i].x, a) * std::pow(q.pts[i].y, b);
        // Exact: a! b! / (a+b+2)!.
        double exact = Poly2::monomial_integral(a, b).to_double();
        REQUIRE(s == Catch::Approx(exact).margin(1e-13));
      }
    }
  }
  for (int n = 1; n <= 6; ++n) {
    EdgeQuad q = edge_quadrature(n);
    double wsum = 0.0;
    for (double w : q.w) wsum += w;
    REQUIRE(wsum == Catch::Approx(1.0).margin(1e-14));
    for (int d = 0; d <= 2 * n - 1; ++d) {
      double s = 0.0;
      for (std::size_t i = 0; i < q.t.size(); ++i) s += q.w[i] * std::pow(q.t[i], d);
      REQUIRE(s == Catch::Approx(1.0 / (d + 1)).margin(1e-13));
    }
  }
}
