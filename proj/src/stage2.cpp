#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "eigbound/exact.hpp"
#include "eigbound/stage2.hpp"
#include "eigbound/verify.hpp"

namespace eigbound {

namespace {

Interval edge_len_iv(const Mesh& m, int e) {
  const Vec2& a = m.vertices[m.edges[e].v0];
  const Vec2& b = m.vertices[m.edges[e].v1];
  Interval dx = Interval(b.x) - Interval(a.x);
  Interval dy = Interval(b.y) - Interval(a.y);
  return isqrt(isqr(dx) + isqr(dy));
}

Interval tri_det_iv(const Mesh& m, int t) {
  const Vec2& p0 = m.vertices[m.tris[t][0]];
  const Vec2& p1 = m.vertices[m.tris[t][1]];
  const Vec2& p2 = m.vertices[m.tris[t][2]];
  Interval ax(p0.x), ay(p0.y);
  return (Interval(p1.x) - ax) * (Interval(p2.y) - ay) -
         (Interval(p1.y) - ay) * (Interval(p2.x) - ax);
}

Space dg_of_degree(int p) {
  switch (p) {
    case 0:
      return Space::dg0;
    case 1:
      return Space::dg1;
    case 2:
      return Space::dg2;
    case 3:
      return Space::dg3;
    default:
      throw std::invalid_argument("no discontinuous space of that degree");
  }
}

// The exact-divergence and trace-matching constructions need the flux space
// to reproduce the trial data exactly, hence the degree rule; the shifted
// residual route has no such restriction because the projection space is
// enlarged to cover both contributions.
void validate_flux_pair(Space trial, Space flux, bool exact_matching) {
  if (!space_is_rt(flux))
    throw std::invalid_argument("flux space must belong to the rt family");
  if (!space_is_continuous(trial))
    throw std::invalid_argument("trial space must be continuous");
  if (exact_matching && space_degree(flux) < space_degree(trial))
    throw std::invalid_argument("flux degree must be at least the trial degree");
}

// Exact dense solve A X = B over the rationals (Gauss-Jordan elimination
// with the first nonzero pivot). A is n x n, B is n x m, both row-major.
std::vector<Rat> rat_solve(int n, std::vector<Rat> A, std::vector<Rat> B, int m) {
  for (int c = 0; c < n; ++c) {
    int p = c;
    while (p < n && A[(std::size_t)p * n + c].is_zero()) ++p;
    if (p == n) throw std::logic_error("singular reference coupling system");
    if (p != c) {
      for (int j = 0; j < n; ++j)
        std::swap(A[(std::size_t)p * n + j], A[(std::size_t)c * n + j]);
      for (int j = 0; j < m; ++j)
        std::swap(B[(std::size_t)p * m + j], B[(std::size_t)c * m + j]);
    }
    const Rat piv = A[(std::size_t)c * n + c];
    for (int r = 0; r < n; ++r) {
      if (r == c || A[(std::size_t)r * n + c].is_zero()) continue;
      Rat f = A[(std::size_t)r * n + c] / piv;
      for (int j = c; j < n; ++j)
        A[(std::size_t)r * n + j] -= f * A[(std::size_t)c * n + j];
      for (int j = 0; j < m; ++j)
        B[(std::size_t)r * m + j] -= f * B[(std::size_t)c * m + j];
    }
  }
  for (int r = 0; r < n; ++r) {
    const Rat piv = A[(std::size_t)r * n + r];
    for (int j = 0; j < m; ++j) B[(std::size_t)r * m + j] = B[(std::size_t)r * m + j] / piv;
  }
  return B;
}

std::vector<Interval> rat_to_iv(const std::vector<Rat>& v) {
  std::vector<Interval> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].to_interval();
  return r;
}

std::vector<double> rat_to_d(const std::vector<Rat>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].to_double();
  return r;
}

std::vector<Interval> spmv_iv(const SparseI& A, const std::vector<Interval>& x) {
  std::vector<Interval> y(A.rows, Interval(0.0));
  for (int i = 0; i < A.rows; ++i) {
    Interval s(0.0);
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      s += A.val[k] * x[A.col_idx[k]];
    y[i] = s;
  }
  return y;
}

std::vector<double> spmv_d(const SparseD& A, const std::vector<double>& x) {
  std::vector<double> y(A.rows, 0.0);
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      s += A.val[k] * x[A.col_idx[k]];
    y[i] = s;
  }
  return y;
}

// Gram matrix of an interval form over interval coefficient vectors; the
// (i,j) and (j,i) entries are the identical interval by construction.
DenseI gram_iv(const SparseI& F, const std::vector<std::vector<Interval>>& vs) {
  int n = (int)vs.size();
  DenseI g(n);
  std::vector<std::vector<Interval>> ys(n);
  for (int j = 0; j < n; ++j) ys[j] = spmv_iv(F, vs[j]);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      Interval s(0.0);
      for (std::size_t d = 0; d < vs[i].size(); ++d) s += vs[i][d] * ys[j][d];
      g.at(i, j) = s;
      g.at(j, i) = s;
    }
  return g;
}

std::vector<double> gram_d(const SparseD& F, const std::vector<std::vector<double>>& vs) {
  int n = (int)vs.size();
  std::vector<double> g((std::size_t)n * n, 0.0);
  for (int j = 0; j < n; ++j) {
    std::vector<double> y = spmv_d(F, vs[j]);
    for (int i = 0; i <= j; ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < vs[i].size(); ++d) s += vs[i][d] * y[d];
      g[(std::size_t)i * n + j] = s;
      g[(std::size_t)j * n + i] = s;
    }
  }
  return g;
}

std::vector<std::vector<Interval>> to_iv_vecs(const std::vector<std::vector<double>>& vs) {
  std::vector<std::vector<Interval>> r(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    r[i].reserve(vs[i].size());
    for (double x : vs[i]) r[i].push_back(Interval(x));
  }
  return r;
}

SparseI dense_to_sparse_iv(const DenseI& m) {
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  t.reserve((std::size_t)m.n * m.n);
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j) t.push_back({{i, j}, m.at(i, j)});
  return SparseI::from_triplets(m.n, m.n, std::move(t));
}

SparseD dense_to_sparse_mid(const DenseI& m) {
  std::vector<std::pair<std::pair<int, int>, double>> t;
  t.reserve((std::size_t)m.n * m.n);
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j) t.push_back({{i, j}, m.at(i, j).mid()});
  return SparseD::from_triplets(m.n, m.n, std::move(t));
}

SparseD dense_to_sparse_d(const std::vector<double>& a, int n) {
  std::vector<std::pair<std::pair<int, int>, double>> t;
  t.reserve((std::size_t)n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.push_back({{i, j}, a[(std::size_t)i * n + j]});
  return SparseD::from_triplets(n, n, std::move(t));
}

Eigen::SparseMatrix<double> to_eigen(const SparseD& A) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(A.nnz());
  for (int i = 0; i < A.rows; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      t.emplace_back(i, A.col_idx[k], A.val[k]);
  Eigen::SparseMatrix<double> S(A.rows, A.cols);
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

// Floating-point solve of the equilibration saddle system
//   [ Mrt  D ] [w]   [  0 ]
//   [ D^T  0 ] [u] = [ -c ]
// for several right-hand sides; returns the w parts.
std::vector<std::vector<double>> saddle_solve_d(const SparseD& Mrt, const SparseD& D,
                                                const std::vector<std::vector<double>>& cs) {
  int nrt = Mrt.rows, ndg = D.cols, N = nrt + ndg;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(Mrt.nnz() + 2 * D.nnz());
  for (int i = 0; i < nrt; ++i)
    for (int k = Mrt.row_ptr[i]; k < Mrt.row_ptr[i + 1]; ++k)
      t.emplace_back(i, Mrt.col_idx[k], Mrt.val[k]);
  for (int i = 0; i < nrt; ++i)
    for (int k = D.row_ptr[i]; k < D.row_ptr[i + 1]; ++k) {
      t.emplace_back(i, nrt + D.col_idx[k], D.val[k]);
      t.emplace_back(nrt + D.col_idx[k], i, D.val[k]);
    }
  Eigen::SparseMatrix<double> S(N, N);
  S.setFromTriplets(t.begin(), t.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(S);
  lu.factorize(S);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("saddle factorisation failed");
  std::vector<std::vector<double>> ws;
  ws.reserve(cs.size());
  for (const std::vector<double>& c : cs) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(N);
    for (int q = 0; q < ndg; ++q) b[nrt + q] = -c[q];
    Eigen::VectorXd x = lu.solve(b);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("saddle solve failed");
    ws.push_back(std::vector<double>(x.data(), x.data() + nrt));
  }
  return ws;
}

// Right-hand side moments c_i[q] = integral of v_i against the q-th
// discontinuous basis function, in floating point.
std::vector<std::vector<double>> trial_moments_d(const SparseD& C,
                                                 const std::vector<std::vector<double>>& vs,
                                                 int ndg) {
  std::vector<std::vector<double>> cs(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    cs[i].assign(ndg, 0.0);
    for (int s = 0; s < C.rows; ++s) {
      double vi = vs[i][s];
      if (vi == 0.0) continue;
      for (int k = C.row_ptr[s]; k < C.row_ptr[s + 1]; ++k)
        cs[i][C.col_idx[k]] += C.val[k] * vi;
    }
  }
  return cs;
}

// Floating-point minimiser of the shifted auxiliary functional
//   |w|^2 + (1/lambda_hat) |div w + v|^2
// over the flux space. The normal equations are symmetric positive definite
// because the discontinuous mass matrix is block diagonal per element and
// exactly invertible blockwise. Any approximate minimiser is admissible; the
// verified evaluation accounts for its divergence residual exactly.
std::vector<std::vector<double>> shifted_flux_solve_d(
    const Mesh& mesh, const DofMap& dgdm, const SparseD& Mrt, const SparseD& D,
    const SparseD& C, double lambda_hat, const std::vector<std::vector<double>>& vs) {
  int ndg = dgdm.n_dofs, ng = dgdm.nloc;
  Eigen::SparseMatrix<double> De = to_eigen(D);
  // Blockwise inverse of the discontinuous mass matrix (dg dofs of an
  // element are contiguous by the dofmap convention).
  std::vector<Eigen::Triplet<double>> t;
  t.reserve((std::size_t)ndg * ng);
  SparseD Mdg = assemble_mass(mesh, dgdm);
  for (int e = 0; e < mesh.n_tris(); ++e) {
    Eigen::MatrixXd blk(ng, ng);
    for (int a = 0; a < ng; ++a)
      for (int b = 0; b < ng; ++b) blk(a, b) = Mdg.at(e * ng + a, e * ng + b);
    Eigen::MatrixXd inv = blk.inverse();
    for (int a = 0; a < ng; ++a)
      for (int b = 0; b < ng; ++b) t.emplace_back(e * ng + a, e * ng + b, inv(a, b));
  }
  Eigen::SparseMatrix<double> Minv(ndg, ndg);
  Minv.setFromTriplets(t.begin(), t.end());
  Eigen::SparseMatrix<double> S = to_eigen(Mrt);
  {
    Eigen::SparseMatrix<double> P = De * Minv;
    Eigen::SparseMatrix<double> Q = P * Eigen::SparseMatrix<double>(De.transpose());
    S = S + (1.0 / lambda_hat) * Q;
  }
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  llt.compute(S);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("shifted flux factorisation failed");
  std::vector<std::vector<double>> cs = trial_moments_d(C, vs, ndg);
  std::vector<std::vector<double>> ws;
  ws.reserve(vs.size());
  for (const std::vector<double>& c : cs) {
    Eigen::VectorXd cv(ndg);
    for (int q = 0; q < ndg; ++q) cv[q] = c[q];
    Eigen::VectorXd rhs = (-1.0 / lambda_hat) * (De * (Minv * cv));
    Eigen::VectorXd x = llt.solve(rhs);
    ws.push_back(std::vector<double>(x.data(), x.data() + Mrt.rows));
  }
  return ws;
}

// Local trace-matching tables: row-major (per_edge x nloc) interval matrix
// R_l per local edge, with  c_loc = |e| * R_l * v_loc  producing the local
// flux coefficients whose normal trace density equals |e| times the trial
// trace exactly.
std::array<std::vector<Interval>, 3> trace_match_tables_iv(Space trial, Space flux) {
  const RTRef& rref = rt_ref(flux);
  const ScalarRef& sref = scalar_ref(trial);
  int pe = rref.per_edge, nc = sref.nloc;
  std::vector<Rat> T((std::size_t)pe * pe);
  for (int row = 0; row < pe; ++row)
    for (int k = 0; k < pe; ++k) T[(std::size_t)row * pe + k] = rref.trace_poly[k].coeff(row);
  std::array<std::vector<Interval>, 3> out;
  for (int l = 0; l < 3; ++l) {
    std::vector<Rat> psi((std::size_t)pe * nc);
    for (int r = 0; r < nc; ++r) {
      const Poly1& tr = sref.edge_trace[l][r];
      if (tr.degree() >= pe)
        for (int row = pe; row <= tr.degree(); ++row)
          if (!tr.coeff(row).is_zero())
            throw std::logic_error("trial trace degree exceeds the flux trace space");
      for (int row = 0; row < pe; ++row) psi[(std::size_t)row * nc + r] = tr.coeff(row);
    }
    out[l] = rat_to_iv(rat_solve(pe, T, std::move(psi), nc));
  }
  return out;
}

// Exact reference tables for the divergence-residual quadratic form. With
// local flux coefficients w and trial coefficients v on an element of
// Jacobian determinant det, the physical divergence is 1/det times the
// reference one and the element integral carries the factor det, so
//   integral of (div w + v)^2 = (1/det) w^T DD w + 2 w^T DC v + det v^T CC v.
// No projection or inversion appears, which keeps the rationals small.
struct ResidualTables {
  std::vector<Rat> dd;  // nr x nr: div_i * div_j
  std::vector<Rat> dc;  // nr x nc: div_i * trial_j
  std::vector<Rat> cc;  // nc x nc: trial_i * trial_j
};

ResidualTables residual_tables(Space trial, Space flux) {
  const RTRef& rref = rt_ref(flux);
  const ScalarRef& sref = scalar_ref(trial);
  ResidualTables t;
  t.dd = rref.div_div;
  t.cc = sref.mass;
  t.dc.resize((std::size_t)rref.nloc * sref.nloc);
  for (int k = 0; k < rref.nloc; ++k)
    for (int r = 0; r < sref.nloc; ++r)
      t.dc[(std::size_t)k * sref.nloc + r] =
          (rref.div[k] * sref.basis[r]).integral_ref_triangle();
  return t;
}

}  // namespace

TrialBasis select_trials_laplacian(const Mesh& mesh, Space trial_space, int n,
                                   const EigOptions& opt) {
  if (!space_is_continuous(trial_space))
    throw std::invalid_argument("trial space must be continuous");
  if (n < 1) throw std::invalid_argument("at least one trial function required");
  TrialBasis tb;
  tb.space = trial_space;
  tb.dm = build_dofmap(mesh, trial_space);
  std::vector<int> imap = interior_map(tb.dm);
  int ni = count_interior(tb.dm);
  if (ni < n)
    throw std::invalid_argument("mesh too coarse for the requested trial count");
  SparseD K = restrict_map(assemble_grad_grad(mesh, tb.dm), imap, ni, imap, ni);
  SparseD M = restrict_map(assemble_mass(mesh, tb.dm), imap, ni, imap, ni);
  EigResult ev = lowest_pairs(K, M, n, opt);
  if ((int)ev.values.size() < n)
    throw std::runtime_error("trial eigenvalue solve returned too few pairs");
  tb.ritz.assign(ev.values.begin(), ev.values.begin() + n);
  tb.vecs.assign(n, std::vector<double>(tb.dm.n_dofs, 0.0));
  for (int k = 0; k < n; ++k)
    for (int d = 0; d < tb.dm.n_dofs; ++d)
      if (imap[d] >= 0) tb.vecs[k][d] = ev.vectors[k][imap[d]];
  return tb;
}

TrialBasis select_trials_steklov(const Mesh& mesh, Space trial_space, int n,
                                 const EigOptions& opt) {
  if (!space_is_continuous(trial_space))
    throw std::invalid_argument("trial space must be continuous");
  if (n < 1) throw std::invalid_argument("at least one trial function required");
  TrialBasis tb;
  tb.space = trial_space;
  tb.dm = build_dofmap(mesh, trial_space);
  SparseD A = sparse_sum(assemble_grad_grad(mesh, tb.dm), assemble_mass(mesh, tb.dm));
  SparseD B = assemble_boundary_mass(mesh, tb.dm);
  EigResult ev = lowest_pairs_singular_b(A, B, n, mesh, tb.dm, opt);
  if ((int)ev.values.size() < n)
    throw std::invalid_argument("trial count exceeds the finite spectrum");
  tb.ritz.assign(ev.values.begin(), ev.values.begin() + n);
  tb.vecs.assign(ev.vectors.begin(), ev.vectors.begin() + n);
  return tb;
}

DenseI trial_gram(const SparseI& form, const TrialBasis& tb) {
  for (const auto& v : tb.vecs)
    if ((int)v.size() != form.cols)
      throw std::invalid_argument("trial vector length does not match the form");
  return gram_iv(form, to_iv_vecs(tb.vecs));
}

DenseI flux_gram_laplacian(const Mesh& mesh, const TrialBasis& tb, Space flux_space,
                           int dense_cap,
                           std::vector<std::vector<Interval>>* flux_out) {
  validate_flux_pair(tb.space, flux_space, true);
  DofMap rtdm = build_dofmap(mesh, flux_space);
  Space dg = dg_of_degree(space_degree(flux_space));
  DofMap dgdm = build_dofmap(mesh, dg);
  int nrt = rtdm.n_dofs, ndg = dgdm.n_dofs, N = nrt + ndg;
  if (N > dense_cap)
    throw std::runtime_error(
        "equilibration saddle exceeds the dense cap; use the shifted route");

  SparseI Mrt = assemble_rt_mass_iv(mesh, rtdm);
  SparseI D = assemble_rt_div_dg_iv(mesh, rtdm, dgdm);
  SparseI C = assemble_scalar_dg_iv(mesh, tb.dm, dgdm);

  std::vector<std::pair<std::pair<int, int>, Interval>> trip;
  trip.reserve(Mrt.nnz() + 2 * D.nnz());
  for (int i = 0; i < nrt; ++i)
    for (int k = Mrt.row_ptr[i]; k < Mrt.row_ptr[i + 1]; ++k)
      trip.push_back({{i, Mrt.col_idx[k]}, Mrt.val[k]});
  for (int i = 0; i < nrt; ++i)
    for (int k = D.row_ptr[i]; k < D.row_ptr[i + 1]; ++k) {
      trip.push_back({{i, nrt + D.col_idx[k]}, D.val[k]});
      trip.push_back({{nrt + D.col_idx[k], i}, D.val[k]});
    }
  SparseI S = SparseI::from_triplets(N, N, std::move(trip));

  int m = (int)tb.vecs.size();
  std::vector<std::vector<Interval>> rhss(m);
  for (int i = 0; i < m; ++i) {
    rhss[i].assign(N, Interval(0.0));
    for (int s = 0; s < C.rows; ++s) {
      double vi = tb.vecs[i][s];
      if (vi == 0.0) continue;
      for (int k = C.row_ptr[s]; k < C.row_ptr[s + 1]; ++k) {
        int q = nrt + C.col_idx[k];
        rhss[i][q] -= C.val[k] * Interval(vi);
      }
    }
  }

  std::vector<std::vector<Interval>> sols = solve_enclosure_multi(S, rhss, dense_cap);
  std::vector<std::vector<Interval>> ws(m);
  for (int i = 0; i < m; ++i)
    ws[i].assign(sols[i].begin(), sols[i].begin() + nrt);
  if (flux_out) *flux_out = ws;
  return gram_iv(Mrt, ws);
}

DenseI flux_gram_laplacian_shifted(const Mesh& mesh, const TrialBasis& tb,
                                   Space flux_space, double lambda_hat,
                                   std::vector<std::vector<Interval>>* flux_out) {
  validate_flux_pair(tb.space, flux_space, false);
  if (!(lambda_hat > 0.0) || !std::isfinite(lambda_hat))
    throw std::invalid_argument("the residual route needs a positive shift");
  DofMap rtdm = build_dofmap(mesh, flux_space);
  Space dg = dg_of_degree(
      std::max(space_degree(flux_space), space_degree(tb.space)));
  DofMap dgdm = build_dofmap(mesh, dg);

  // Approximate flux minimising the shifted auxiliary functional.
  SparseD Mrt_d = assemble_rt_mass(mesh, rtdm);
  SparseD D_d = assemble_rt_div_dg(mesh, rtdm, dgdm);
  SparseD C_d = assemble_scalar_dg(mesh, tb.dm, dgdm);
  std::vector<std::vector<double>> w1 =
      shifted_flux_solve_d(mesh, dgdm, Mrt_d, D_d, C_d, lambda_hat, tb.vecs);
  int m = (int)w1.size();

  // Residual Gram from the exact quadratic form; local coefficients are
  // exact products of stored doubles with orientation signs, so the point
  // intervals below are exact and every rounding lands in the enclosure.
  ResidualTables tabs = residual_tables(tb.space, flux_space);
  std::vector<Interval> dd = rat_to_iv(tabs.dd);
  std::vector<Interval> dc = rat_to_iv(tabs.dc);
  std::vector<Interval> cc = rat_to_iv(tabs.cc);
  const int nr = rt_ref(flux_space).nloc;
  const int nc = scalar_ref(tb.space).nloc;

  DenseI g2(m);
  std::vector<std::vector<Interval>> wl(m, std::vector<Interval>(nr));
  std::vector<std::vector<Interval>> vl(m, std::vector<Interval>(nc));
  for (int t = 0; t < mesh.n_tris(); ++t) {
    Interval det = tri_det_iv(mesh, t);
    if (!(det.lo > 0.0)) throw std::runtime_error("degenerate element in the mesh");
    Interval inv_det = Interval(1.0) / det;
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < nr; ++k)
        wl[i][k] = Interval(w1[i][rtdm.dofs[t * nr + k]] * rtdm.scale[t * nr + k]);
      for (int r = 0; r < nc; ++r)
        vl[i][r] = Interval(tb.vecs[i][tb.dm.dofs[t * nc + r]] * tb.dm.scale[t * nc + r]);
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j) {
        Interval sdd(0.0), sdc(0.0), scc(0.0);
        for (int k = 0; k < nr; ++k) {
          for (int k2 = 0; k2 < nr; ++k2)
            sdd += wl[i][k] * dd[(std::size_t)k * nr + k2] * wl[j][k2];
          for (int r = 0; r < nc; ++r)
            sdc += dc[(std::size_t)k * nc + r] *
                   (wl[i][k] * vl[j][r] + wl[j][k] * vl[i][r]);
        }
        for (int r = 0; r < nc; ++r)
          for (int r2 = 0; r2 < nc; ++r2)
            scc += vl[i][r] * cc[(std::size_t)r * nc + r2] * vl[j][r2];
        Interval s = inv_det * sdd + sdc + det * scc;
        g2.at(i, j) += s;
        if (i != j) g2.at(j, i) = g2.at(i, j);
      }
  }

  SparseI Mrt_iv = assemble_rt_mass_iv(mesh, rtdm);
  std::vector<std::vector<Interval>> w1_iv = to_iv_vecs(w1);
  DenseI g = gram_iv(Mrt_iv, w1_iv);
  Interval inv_lh = Interval(1.0) / Interval(lambda_hat);
  for (std::size_t idx = 0; idx < g.a.size(); ++idx) g.a[idx] += inv_lh * g2.a[idx];
  if (flux_out) *flux_out = std::move(w1_iv);
  return g;
}

DenseI flux_gram_steklov(const Mesh& mesh, const TrialBasis& tb, Space flux_space,
                         std::vector<std::vector<Interval>>* flux_out) {
  validate_flux_pair(tb.space, flux_space, true);
  DofMap rtdm = build_dofmap(mesh, flux_space);
  const RTRef& rref = rt_ref(flux_space);
  const int pe = rref.per_edge, nloc = rref.nloc, nc = scalar_ref(tb.space).nloc;
  std::array<std::vector<Interval>, 3> rl = trace_match_tables_iv(tb.space, flux_space);
  int m = (int)tb.vecs.size();

  // Boundary coefficients matching the normal trace to the trial data.
  std::vector<std::vector<Interval>> cb(m);
  for (int i = 0; i < m; ++i) cb[i].assign(rtdm.n_dofs, Interval(0.0));
  for (int e = 0; e < mesh.n_edges(); ++e) {
    if (mesh.edges[e].t1 != -1) continue;
    int t = mesh.edges[e].t0;
    int l = -1;
    for (int c = 0; c < 3; ++c)
      if (mesh.tri_edges[t][c] == e) l = c;
    if (l < 0) throw std::logic_error("boundary edge missing from its element");
    for (int k = 0; k < pe; ++k)
      if (!rtdm.boundary[rtdm.dofs[t * nloc + l * pe + k]])
        throw std::logic_error("boundary dof not flagged as boundary");
    Interval elen = edge_len_iv(mesh, e);
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < pe; ++k) {
        Interval s(0.0);
        for (int r = 0; r < nc; ++r) {
          double vl = tb.vecs[i][tb.dm.dofs[t * nc + r]] * tb.dm.scale[t * nc + r];
          if (vl != 0.0) s += rl[l][(std::size_t)k * nc + r] * Interval(vl);
        }
        int loc = l * pe + k;
        int gdof = rtdm.dofs[t * nloc + loc];
        cb[i][gdof] = (elen * s) * Interval(rtdm.scale[t * nloc + loc]);
      }
    }
  }

  // Interior coefficients: floating-point energy minimisation given the
  // fixed boundary values. No certificate is needed because any interior
  // values give an admissible field; good ones merely sharpen the Gram.
  SparseD G_d = sparse_sum(assemble_rt_mass(mesh, rtdm), assemble_div_div(mesh, rtdm));
  std::vector<int> imap = interior_map(rtdm);
  int ni = count_interior(rtdm);
  std::vector<int> bmap(rtdm.n_dofs, -1);
  int nb = 0;
  for (int d = 0; d < rtdm.n_dofs; ++d)
    if (rtdm.boundary[d]) bmap[d] = nb++;
  SparseD Gff = restrict_map(G_d, imap, ni, imap, ni);
  SparseD Gfb = restrict_map(G_d, imap, ni, bmap, nb);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  llt.compute(to_eigen(Gff));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("interior energy factorisation failed");

  std::vector<std::vector<Interval>> ws(m);
  for (int i = 0; i < m; ++i) {
    std::vector<double> cmid(nb, 0.0);
    for (int d = 0; d < rtdm.n_dofs; ++d)
      if (bmap[d] >= 0) cmid[bmap[d]] = cb[i][d].mid();
    std::vector<double> rhs_i = spmv_d(Gfb, cmid);
    Eigen::VectorXd rhs(ni);
    for (int d = 0; d < ni; ++d) rhs[d] = -rhs_i[d];
    Eigen::VectorXd f = llt.solve(rhs);
    ws[i].assign(rtdm.n_dofs, Interval(0.0));
    for (int d = 0; d < rtdm.n_dofs; ++d)
      ws[i][d] = rtdm.boundary[d] ? cb[i][d] : Interval(f[imap[d]]);
  }

  SparseI G_iv = sparse_sum(assemble_rt_mass_iv(mesh, rtdm), assemble_div_div_iv(mesh, rtdm));
  if (flux_out) *flux_out = ws;
  return gram_iv(G_iv, ws);
}

LGResult lg_bounds(const DenseI& a0, const DenseI& a1, const DenseI& a2,
                   double rho, const LGOptions& opt) {
  int n = a0.n;
  if (a1.n != n || a2.n != n)
    throw std::invalid_argument("gram matrix sizes disagree");
  if (n < 1) throw std::invalid_argument("empty trial set");
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("the shift must be positive and finite");

  // Bound pencil A z = nu B z with A = a0 - rho a1 and
  // B = a0 - 2 rho a1 + rho^2 a2, plus the transformed right-hand side
  // B' = rho a2 - a1 = (B - A)/rho. When every trial Rayleigh quotient lies
  // below rho, A is negative definite and B, B' are positive definite;
  // each eigenvalue nu < 0 then certifies, for the count m of true
  // eigenvalues below rho, the bound lambda_{m-k} >= rho - rho/(1 - nu_k)
  // (equivalently -theta_k on the transformed pencil A z = theta B' z).
  Interval rv(rho);
  Interval two_rv = Interval(2.0) * rv;
  Interval rv2 = isqr(rv);
  DenseI A(n), B(n), Bp(n);
  for (std::size_t idx = 0; idx < a0.a.size(); ++idx) {
    A.a[idx] = a0.a[idx] - rv * a1.a[idx];
    B.a[idx] = a0.a[idx] - two_rv * a1.a[idx] + rv2 * a2.a[idx];
    Bp.a[idx] = rv * a2.a[idx] - a1.a[idx];
  }
  SparseI A0s = dense_to_sparse_iv(a0), A1s = dense_to_sparse_iv(a1);
  SparseI As = dense_to_sparse_iv(A), Bs = dense_to_sparse_iv(B);
  SparseI Bps = dense_to_sparse_iv(Bp);
  SparseI Z = SparseI::from_triplets(n, n, {});

  EncloseOptions eo;
  eo.rel_width = opt.rel_width;
  eo.max_probes = opt.max_probes;
  eo.need_upper = true;

  auto float_pencil = [n](const SparseD& X, const SparseD& Y) {
    return lowest_pairs(X, Y, n).values;
  };

  LGResult r;
  // Upper bounds (Ritz enclosures) are valid for any positive definite
  // trial mass Gram, independent of the shift.
  CountResult c1 = count_below(A1s, Z, 0.0);
  if (!(c1.conclusive && c1.below == 0)) return r;
  r.upper = pencil_enclosure(A0s, A1s,
                             float_pencil(dense_to_sparse_mid(a0), dense_to_sparse_mid(a1)),
                             eo);

  // Feasibility certificates.
  CountResult ca = count_below(As, Z, 0.0);
  CountResult cbb = count_below(Bs, Z, 0.0);
  CountResult cp = count_below(Bps, Z, 0.0);
  if (!(ca.conclusive && ca.below == n && cbb.conclusive && cbb.below == 0 &&
        cp.conclusive && cp.below == 0))
    return r;

  SparseD Am = dense_to_sparse_mid(A), Bm = dense_to_sparse_mid(B);
  SparseD Bpm = dense_to_sparse_mid(Bp);
  r.nu = pencil_enclosure(As, Bs, float_pencil(Am, Bm), eo);
  std::vector<Interval> th = pencil_enclosure(As, Bps, float_pencil(Am, Bpm), eo);

  r.lower.resize(n);
  for (int k = 0; k < n; ++k) {
    // Transformed route: the bound is -theta_k directly.
    Interval lb(-th[k].hi, -th[k].lo);
    // Direct route, intersected when its division is well defined.
    Interval om = Interval(1.0) - r.nu[k];
    if (om.lo > 0.0) {
      Interval lb1 = rv - rv / om;
      double lo = std::max(lb.lo, lb1.lo);
      double hi = std::min(lb.hi, lb1.hi);
      if (lo > hi)
        throw std::logic_error("bound routes produced disjoint enclosures");
      lb = Interval(lo, hi);
    }
    r.lower[k] = lb;
  }
  r.feasible = true;
  return r;
}

namespace {

void validate_stage2(const Stage2Options& o) {
  if (o.n_trials < 1)
    throw std::invalid_argument("at least one trial function required");
  if (o.m_index < o.n_trials)
    throw std::invalid_argument(
        "spectral count below the trial count is inconsistent with feasibility");
  if (!(o.rho > 0.0) || !std::isfinite(o.rho))
    throw std::invalid_argument("the shift must be positive and finite");
  if (o.lambda_hat < 0.0 || !std::isfinite(o.lambda_hat))
    throw std::invalid_argument("the flux shift must be finite and nonnegative");
  validate_flux_pair(o.trial_space, o.flux_space, o.lambda_hat == 0.0);
}

// Map the kernel's k-ordered bounds onto eigenvalue indices: entry k bounds
// eigenvalue m_index - k (1-based). Bounds are clamped at zero and shifted
// back when the kernel ran on the shifted operator.
void fill_lowers(Stage2Result& r, const std::vector<Interval>& lower_k, int m_index,
                 double shift_back) {
  r.lower_by_eig.assign(m_index, std::nullopt);
  for (int k = 0; k < (int)lower_k.size(); ++k) {
    int i = m_index - 1 - k;
    if (i < 0) continue;
    Interval lb = lower_k[k];
    if (shift_back != 0.0) lb = lb - Interval(shift_back);
    if (!(lb.hi > 0.0))
      lb = Interval(0.0);
    else if (lb.lo < 0.0)
      lb = Interval(0.0, lb.hi);
    r.lower_by_eig[i] = lb;
  }
}

// Uncertified floating-point evaluation of the same construction, for
// convergence studies.
Stage2Result stage2_float(const Mesh& mesh, const TrialBasis& tb,
                          const Stage2Options& o, bool steklov) {
  int n = o.n_trials;
  SparseD K = assemble_grad_grad(mesh, tb.dm);
  SparseD M = assemble_mass(mesh, tb.dm);
  std::vector<double> a0, a1, a2;
  if (steklov) {
    a0 = gram_d(sparse_sum(K, M), tb.vecs);
    a1 = gram_d(assemble_boundary_mass(mesh, tb.dm), tb.vecs);
    DofMap rtdm = build_dofmap(mesh, o.flux_space);
    const RTRef& rref = rt_ref(o.flux_space);
    const int pe = rref.per_edge, nloc = rref.nloc, nc = scalar_ref(tb.space).nloc;
    std::array<std::vector<Interval>, 3> rl_iv = trace_match_tables_iv(tb.space, o.flux_space);
    std::array<std::vector<double>, 3> rl;
    for (int l = 0; l < 3; ++l) {
      rl[l].resize(rl_iv[l].size());
      for (std::size_t idx = 0; idx < rl[l].size(); ++idx) rl[l][idx] = rl_iv[l][idx].mid();
    }
    std::vector<std::vector<double>> ws(n);
    for (int i = 0; i < n; ++i) ws[i].assign(rtdm.n_dofs, 0.0);
    for (int e = 0; e < mesh.n_edges(); ++e) {
      if (mesh.edges[e].t1 != -1) continue;
      int t = mesh.edges[e].t0;
      int l = -1;
      for (int c = 0; c < 3; ++c)
        if (mesh.tri_edges[t][c] == e) l = c;
      const Vec2& pa = mesh.vertices[mesh.edges[e].v0];
      const Vec2& pb = mesh.vertices[mesh.edges[e].v1];
      double elen = std::hypot(pb.x - pa.x, pb.y - pa.y);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < pe; ++k) {
          double s = 0.0;
          for (int r = 0; r < nc; ++r)
            s += rl[l][(std::size_t)k * nc + r] *
                 tb.vecs[i][tb.dm.dofs[t * nc + r]] * tb.dm.scale[t * nc + r];
          int loc = l * pe + k;
          ws[i][rtdm.dofs[t * nloc + loc]] = elen * s * rtdm.scale[t * nloc + loc];
        }
    }
    SparseD G_d = sparse_sum(assemble_rt_mass(mesh, rtdm), assemble_div_div(mesh, rtdm));
    std::vector<int> imap = interior_map(rtdm);
    int ni = count_interior(rtdm);
    std::vector<int> bmap(rtdm.n_dofs, -1);
    int nb = 0;
    for (int d = 0; d < rtdm.n_dofs; ++d)
      if (rtdm.boundary[d]) bmap[d] = nb++;
    SparseD Gff = restrict_map(G_d, imap, ni, imap, ni);
    SparseD Gfb = restrict_map(G_d, imap, ni, bmap, nb);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
    llt.compute(to_eigen(Gff));
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("interior energy factorisation failed");
    for (int i = 0; i < n; ++i) {
      std::vector<double> cmid(nb, 0.0);
      for (int d = 0; d < rtdm.n_dofs; ++d)
        if (bmap[d] >= 0) cmid[bmap[d]] = ws[i][d];
      std::vector<double> rhs_i = spmv_d(Gfb, cmid);
      Eigen::VectorXd rhs(ni);
      for (int d = 0; d < ni; ++d) rhs[d] = -rhs_i[d];
      Eigen::VectorXd f = llt.solve(rhs);
      for (int d = 0; d < rtdm.n_dofs; ++d)
        if (!rtdm.boundary[d]) ws[i][d] = f[imap[d]];
    }
    a2 = gram_d(G_d, ws);
  } else {
    a0 = gram_d(K, tb.vecs);
    a1 = gram_d(M, tb.vecs);
    DofMap rtdm = build_dofmap(mesh, o.flux_space);
    Space dg = dg_of_degree(o.lambda_hat > 0.0
                                ? std::max(space_degree(o.flux_space),
                                           space_degree(tb.space))
                                : space_degree(o.flux_space));
    DofMap dgdm = build_dofmap(mesh, dg);
    SparseD Mrt_d = assemble_rt_mass(mesh, rtdm);
    SparseD D_d = assemble_rt_div_dg(mesh, rtdm, dgdm);
    SparseD C_d = assemble_scalar_dg(mesh, tb.dm, dgdm);
    std::vector<std::vector<double>> w1 =
        o.lambda_hat > 0.0
            ? shifted_flux_solve_d(mesh, dgdm, Mrt_d, D_d, C_d, o.lambda_hat, tb.vecs)
            : saddle_solve_d(Mrt_d, D_d, trial_moments_d(C_d, tb.vecs, dgdm.n_dofs));
    a2 = gram_d(Mrt_d, w1);
    if (o.lambda_hat > 0.0) {
      ResidualTables tabs = residual_tables(tb.space, o.flux_space);
      std::vector<double> dd = rat_to_d(tabs.dd);
      std::vector<double> dc = rat_to_d(tabs.dc);
      std::vector<double> cc = rat_to_d(tabs.cc);
      const int nr = rt_ref(o.flux_space).nloc;
      const int nc = scalar_ref(tb.space).nloc;
      std::vector<double> g2((std::size_t)n * n, 0.0);
      std::vector<std::vector<double>> wl(n, std::vector<double>(nr));
      std::vector<std::vector<double>> vl(n, std::vector<double>(nc));
      for (int t = 0; t < mesh.n_tris(); ++t) {
        const Vec2& p0 = mesh.vertices[mesh.tris[t][0]];
        const Vec2& p1 = mesh.vertices[mesh.tris[t][1]];
        const Vec2& p2 = mesh.vertices[mesh.tris[t][2]];
        double det = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
        for (int i = 0; i < n; ++i) {
          for (int k = 0; k < nr; ++k)
            wl[i][k] = w1[i][rtdm.dofs[t * nr + k]] * rtdm.scale[t * nr + k];
          for (int r = 0; r < nc; ++r)
            vl[i][r] = tb.vecs[i][tb.dm.dofs[t * nc + r]] * tb.dm.scale[t * nc + r];
        }
        for (int i = 0; i < n; ++i)
          for (int j = 0; j <= i; ++j) {
            double sdd = 0.0, sdc = 0.0, scc = 0.0;
            for (int k = 0; k < nr; ++k)
              for (int k2 = 0; k2 < nr; ++k2)
                sdd += wl[i][k] * dd[(std::size_t)k * nr + k2] * wl[j][k2];
            for (int k = 0; k < nr; ++k)
              for (int r = 0; r < nc; ++r)
                sdc += dc[(std::size_t)k * nc + r] *
                       (wl[i][k] * vl[j][r] + wl[j][k] * vl[i][r]);
            for (int r = 0; r < nc; ++r)
              for (int r2 = 0; r2 < nc; ++r2)
                scc += vl[i][r] * cc[(std::size_t)r * nc + r2] * vl[j][r2];
            double s = sdd / det + sdc + det * scc;
            g2[(std::size_t)i * n + j] += s;
            if (j != i) g2[(std::size_t)j * n + i] += s;
          }
      }
      for (std::size_t idx = 0; idx < a2.size(); ++idx)
        a2[idx] += g2[idx] / o.lambda_hat;
    }
  }

  double shift = (!steklov && o.lambda_hat > 0.0) ? o.lambda_hat : 0.0;
  double rho_eff = o.rho + shift;
  if (shift > 0.0)
    for (std::size_t idx = 0; idx < a0.size(); ++idx) a0[idx] += shift * a1[idx];

  Stage2Result r;
  r.ritz = tb.ritz;
  r.upper.reserve(n);
  for (int i = 0; i < n; ++i) r.upper.push_back(Interval(tb.ritz[i]));
  bool ok = true;
  for (int i = 0; i < n; ++i) ok = ok && tb.ritz[i] < o.rho;
  if (!ok) {
    r.lower_by_eig.assign(o.m_index, std::nullopt);
    return r;
  }
  std::vector<double> A((std::size_t)n * n), B((std::size_t)n * n);
  for (std::size_t idx = 0; idx < A.size(); ++idx) {
    A[idx] = a0[idx] - rho_eff * a1[idx];
    B[idx] = a0[idx] - 2.0 * rho_eff * a1[idx] + rho_eff * rho_eff * a2[idx];
  }
  std::vector<double> nu;
  try {
    nu = lowest_pairs(dense_to_sparse_d(A, n), dense_to_sparse_d(B, n), n).values;
  } catch (const std::exception&) {
    r.lower_by_eig.assign(o.m_index, std::nullopt);
    return r;
  }
  for (double v : nu) ok = ok && v < 0.0;
  if (!ok) {
    r.lower_by_eig.assign(o.m_index, std::nullopt);
    return r;
  }
  r.feasible = true;
  std::vector<Interval> lower_k(n);
  for (int k = 0; k < n; ++k) {
    double b = rho_eff - rho_eff / (1.0 - nu[k]);
    lower_k[k] = Interval(b);
    r.nu.push_back(Interval(nu[k]));
  }
  fill_lowers(r, lower_k, o.m_index, shift);
  return r;
}

}  // namespace

Stage2Result stage2_laplacian(const Mesh& mesh, const Stage2Options& o) {
  validate_stage2(o);
  TrialBasis tb = select_trials_laplacian(mesh, o.trial_space, o.n_trials, o.eig);
  if (!o.verified) return stage2_float(mesh, tb, o, false);

  SparseI K = assemble_grad_grad_iv(mesh, tb.dm);
  SparseI M = assemble_mass_iv(mesh, tb.dm);
  DenseI gk = trial_gram(K, tb);
  DenseI gm = trial_gram(M, tb);
  DenseI a0 = gk, a2;
  double shift = 0.0, rho_eff = o.rho;
  if (o.lambda_hat > 0.0) {
    shift = o.lambda_hat;
    // Round the effective shift down so it never exceeds the certified sum.
    rho_eff = std::nextafter(o.rho + shift, 0.0);
    Interval lh(shift);
    for (std::size_t idx = 0; idx < a0.a.size(); ++idx)
      a0.a[idx] = gk.a[idx] + lh * gm.a[idx];
    a2 = flux_gram_laplacian_shifted(mesh, tb, o.flux_space, shift);
  } else {
    a2 = flux_gram_laplacian(mesh, tb, o.flux_space, o.dense_cap);
  }
  LGResult lg = lg_bounds(a0, gm, a2, rho_eff, o.lg);

  Stage2Result r;
  r.ritz = tb.ritz;
  r.feasible = lg.feasible;
  r.nu = lg.nu;
  r.upper = lg.upper;
  if (shift > 0.0)
    for (Interval& u : r.upper) u = u - Interval(shift);
  if (lg.feasible)
    fill_lowers(r, lg.lower, o.m_index, shift);
  else
    r.lower_by_eig.assign(o.m_index, std::nullopt);
  return r;
}

Stage2Result stage2_steklov(const Mesh& mesh, const Stage2Options& o) {
  validate_stage2(o);
  if (o.lambda_hat != 0.0)
    throw std::invalid_argument("the boundary-flow route has no shifted variant");
  TrialBasis tb = select_trials_steklov(mesh, o.trial_space, o.n_trials, o.eig);
  if (!o.verified) return stage2_float(mesh, tb, o, true);

  SparseI A_iv = sparse_sum(assemble_grad_grad_iv(mesh, tb.dm), assemble_mass_iv(mesh, tb.dm));
  DenseI a0 = trial_gram(A_iv, tb);
  DenseI a1 = trial_gram(assemble_boundary_mass_iv(mesh, tb.dm), tb);
  DenseI a2 = flux_gram_steklov(mesh, tb, o.flux_space);
  LGResult lg = lg_bounds(a0, a1, a2, o.rho, o.lg);

  Stage2Result r;
  r.ritz = tb.ritz;
  r.feasible = lg.feasible;
  r.nu = lg.nu;
  r.upper = lg.upper;
  if (lg.feasible)
    fill_lowers(r, lg.lower, o.m_index, 0.0);
  else
    r.lower_by_eig.assign(o.m_index, std::nullopt);
  return r;
}

}  // namespace eigbound
