#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "eigbound/eigsolve.hpp"
#include "eigbound/quadrature.hpp"

extern "C" {
void dsygv_(const int* itype, const char* jobz, const char* uplo, const int* n,
            double* a, const int* lda, double* b, const int* ldb, double* w,
            double* work, const int* lwork, int* info);
void dsyevd_(const char* jobz, const char* uplo, const int* n, double* a,
             const int* lda, double* w, double* work, const int* lwork, int* iwork,
             const int* liwork, int* info);
void openblas_set_num_threads(int n);
}

namespace eigbound {

namespace {

// Deterministic results require a fixed BLAS thread count; allow an explicit
// override through the environment.
const bool blas_init = [] {
  int n = 1;
  if (const char* env = std::getenv("EIGBOUND_THREADS")) {
    n = std::max(1, std::atoi(env));
  }
  openblas_set_num_threads(n);
  return true;
}();

Eigen::SparseMatrix<double> to_eigen(const SparseD& m) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(m.nnz());
  for (int i = 0; i < m.rows; ++i)
    for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
      t.emplace_back(i, m.col_idx[k], m.val[k]);
  Eigen::SparseMatrix<double> e(m.rows, m.cols);
  e.setFromTriplets(t.begin(), t.end());
  return e;
}

void spmv(const SparseD& m, const std::vector<double>& x, std::vector<double>& y) {
  y.assign(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
      s += m.val[k] * x[m.col_idx[k]];
    y[i] = s;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void fix_sign(std::vector<double>& v) {
  double mx = 0.0;
  int arg = 0;
  for (int i = 0; i < (int)v.size(); ++i)
    if (std::fabs(v[i]) > mx) {
      mx = std::fabs(v[i]);
      arg = i;
    }
  if (v[arg] < 0.0)
    for (auto& x : v) x = -x;
}

void dense_syevd(std::vector<double>& a, int n, std::vector<double>& w,
                 bool want_vectors) {
  int info = 0, lwork = -1, liwork = -1;
  char jobz = want_vectors ? 'V' : 'N', uplo = 'L';
  w.assign(n, 0.0);
  double wk = 0.0;
  int iwk = 0;
  dsyevd_(&jobz, &uplo, &n, a.data(), &n, w.data(), &wk, &lwork, &iwk, &liwork,
          &info);
  lwork = (int)wk;
  liwork = iwk;
  std::vector<double> work(std::max(1, lwork));
  std::vector<int> iwork(std::max(1, liwork));
  dsyevd_(&jobz, &uplo, &n, a.data(), &n, w.data(), work.data(), &lwork,
          iwork.data(), &liwork, &info);
  if (info != 0) throw std::runtime_error("symmetric eigensolver failed");
}

// Full solution of A x = lambda B x by LAPACK, A/B symmetric, B positive
// definite. Returns all eigenpairs ascending with B-orthonormal vectors.
void dense_sygv(std::vector<double> a, std::vector<double> b, int n,
                std::vector<double>& w, std::vector<std::vector<double>>& z) {
  int itype = 1, lwork = -1, info = 0;
  char jobz = 'V', uplo = 'L';
  w.assign(n, 0.0);
  double wk = 0.0;
  dsygv_(&itype, &jobz, &uplo, &n, a.data(), &n, b.data(), &n, w.data(), &wk,
         &lwork, &info);
  lwork = (int)wk;
  std::vector<double> work(std::max(1, lwork));
  dsygv_(&itype, &jobz, &uplo, &n, a.data(), &n, b.data(), &n, w.data(),
         work.data(), &lwork, &info);
  if (info != 0) throw std::runtime_error("generalized symmetric eigensolver failed");
  z.assign(n, std::vector<double>(n));
  // Eigenvectors are columns of the (column-major) a array.
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) z[j][i] = a[(std::size_t)j * n + i];
}

EigResult dense_lowest(const SparseD& A, const SparseD& B, int k) {
  int n = A.rows;
  std::vector<double> w;
  std::vector<std::vector<double>> z;
  dense_sygv(A.to_dense(), B.to_dense(), n, w, z);
  EigResult r;
  r.d_prime = n;
  int kk = std::min(k, n);
  for (int i = 0; i < kk; ++i) {
    r.values.push_back(w[i]);
    fix_sign(z[i]);
    r.vectors.push_back(std::move(z[i]));
  }
  return r;
}

// Lowest eigenpairs for a large positive definite pencil: build a
// B-orthonormal Krylov basis of x -> A^{-1} B x (full reorthogonalization,
// fixed-seed start vector), then Rayleigh-Ritz on the original pencil with
// an explicit residual acceptance test.
EigResult lanczos_lowest(const SparseD& A, const SparseD& B, int k,
                         const EigOptions& opt) {
  int n = A.rows;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  llt.compute(to_eigen(A));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sparse factorization failed (matrix not positive definite?)");

  int m = std::min(n, std::max(2 * k + 30, k + opt.lanczos_extra));
  for (int attempt = 0; attempt < 3; ++attempt, m = std::min(n, 2 * m)) {
    std::vector<std::vector<double>> V, BV;
    {
      std::mt19937_64 rng(12345);
      std::uniform_real_distribution<double> U(-1.0, 1.0);
      std::vector<double> v(n);
      for (auto& x : v) x = U(rng);
      std::vector<double> bv;
      spmv(B, v, bv);
      double nrm = std::sqrt(dot(v, bv));
      for (auto& x : v) x /= nrm;
      for (auto& x : bv) x /= nrm;
      V.push_back(std::move(v));
      BV.push_back(std::move(bv));
    }

    for (int j = 0; (int)V.size() < m; ++j) {
      Eigen::Map<const Eigen::VectorXd> rhs(BV[j].data(), n);
      Eigen::VectorXd sol = llt.solve(rhs);
      std::vector<double> w(sol.data(), sol.data() + n);
      std::vector<double> bw;
      spmv(B, w, bw);
      double norm0 = std::sqrt(std::max(0.0, dot(w, bw)));
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < V.size(); ++q) {
          double c = dot(w, BV[q]);
          if (c == 0.0) continue;
          for (int i = 0; i < n; ++i) w[i] -= c * V[q][i];
        }
        spmv(B, w, bw);
      }
      double bnorm = std::sqrt(std::max(0.0, dot(w, bw)));
      if (bnorm < 1e-12 * norm0) break;  // basis spans an invariant subspace
      for (auto& x : w) x /= bnorm;
      for (auto& x : bw) x /= bnorm;
      V.push_back(std::move(w));
      BV.push_back(std::move(bw));
    }

    // Rayleigh-Ritz on the pencil: with V B-orthonormal the projected
    // problem is the standard eigenproblem for T = V^T A V.
    int mm = (int)V.size();
    std::vector<double> T((std::size_t)mm * mm, 0.0);
    for (int q = 0; q < mm; ++q) {
      std::vector<double> av;
      spmv(A, V[q], av);
      for (int p = 0; p < mm; ++p) T[(std::size_t)q * mm + p] = dot(V[p], av);
    }
    for (int q = 0; q < mm; ++q)
      for (int p = q + 1; p < mm; ++p) {
        double c = 0.5 * (T[(std::size_t)q * mm + p] + T[(std::size_t)p * mm + q]);
        T[(std::size_t)q * mm + p] = T[(std::size_t)p * mm + q] = c;
      }
    std::vector<double> theta;
    dense_syevd(T, mm, theta, true);

    EigResult r;
    r.d_prime = n;
    int kk = std::min(k, mm);
    bool converged = true;
    for (int j = 0; j < kk; ++j) {
      double lam = theta[j];
      std::vector<double> x(n, 0.0);
      for (int q = 0; q < mm; ++q) {
        double s = T[(std::size_t)j * mm + q];
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i) x[i] += s * V[q][i];
      }
      std::vector<double> ax, bx;
      spmv(A, x, ax);
      spmv(B, x, bx);
      double r2 = 0.0, a2 = 0.0;
      for (int i = 0; i < n; ++i) {
        double d = ax[i] - lam * bx[i];
        r2 += d * d;
        a2 += ax[i] * ax[i];
      }
      if (std::sqrt(r2) > 1e-9 * std::sqrt(std::max(a2, 1.0))) converged = false;
      fix_sign(x);
      r.values.push_back(lam);
      r.vectors.push_back(std::move(x));
    }
    if (converged || m >= n) return r;
  }
  throw std::runtime_error("iterative eigensolver did not converge");
}

// Quadrature factorization of the boundary mass matrix: rows of C hold
// sqrt(w_g |e|) times the trace values at the Gauss points of each marked
// edge, so B = C^T C exactly (a rule with p+1 points integrates products
// of two degree-p traces without error).
SparseD boundary_factor(const Mesh& mesh, const DofMap& dm) {
  const ScalarRef& ref = scalar_ref(dm.space);
  int p = space_degree(dm.space);
  int npts = p + 1;
  EdgeQuad eq = edge_quadrature(npts);

  std::vector<std::pair<std::pair<int, int>, double>> trips;
  int row = 0;
  for (int t = 0; t < mesh.n_tris(); ++t) {
    for (int l = 0; l < 3; ++l) {
      const auto& e = mesh.edges[mesh.tri_edges[t][l]];
      if (e.marker == 0) continue;
      if (e.t0 != t) continue;  // boundary edges belong to one triangle
      Vec2 p0 = mesh.vertices[e.v0], p1 = mesh.vertices[e.v1];
      double len = std::hypot(p1.x - p0.x, p1.y - p0.y);
      for (int g = 0; g < npts; ++g) {
        double scale = std::sqrt(eq.w[g] * len);
        // Every local function with a nonzero trace on this edge
        // contributes (for the nonconforming family that is all of them).
        for (int kloc = 0; kloc < (int)ref.edge_trace[l].size(); ++kloc) {
          const Poly1& tr = ref.edge_trace[l][kloc];
          double val = 0.0;
          for (int c = tr.degree(); c >= 0; --c)
            val = val * eq.t[g] + tr.coeff(c).to_interval().mid();
          if (val != 0.0)
            trips.push_back({{row, dm.dofs[t * dm.nloc + kloc]}, scale * val});
        }
        ++row;
      }
    }
  }
  return SparseD::from_triplets(row, dm.n_dofs, std::move(trips));
}

}  // namespace

EigResult lowest_pairs(const SparseD& A, const SparseD& B, int k,
                       const EigOptions& opt) {
  if (A.rows != A.cols || B.rows != B.cols || A.rows != B.rows)
    throw std::invalid_argument("pencil dimension mismatch");
  if (A.rows <= opt.dense_cap) return dense_lowest(A, B, k);
  return lanczos_lowest(A, B, k, opt);
}

std::vector<double> dense_symmetric_eigenvalues(std::vector<double> a, int n) {
  std::vector<double> w;
  dense_syevd(a, n, w, false);
  return w;
}

EigResult lowest_pairs_singular_b(const SparseD& A, const SparseD& B, int k,
                                  const Mesh& mesh, const DofMap& dm,
                                  const EigOptions& opt) {
  int n = A.rows;
  if (n <= opt.dense_cap) {
    // Swap the pencil: B x = mu A x with A positive definite. Finite
    // eigenvalues of the original problem are lambda = 1/mu for mu above
    // the cutoff; the rest belong to the infinite part of the spectrum.
    std::vector<double> w;
    std::vector<std::vector<double>> z;
    dense_sygv(B.to_dense(), A.to_dense(), n, w, z);
    double mu_max = std::max(w.back(), 0.0);
    EigResult r;
    for (int j = n - 1; j >= 0; --j) {
      if (!(w[j] > opt.mu_cutoff * mu_max)) break;
      ++r.d_prime;
    }
    int kk = std::min(k, r.d_prime);
    for (int idx = 0; idx < kk; ++idx) {
      int j = n - 1 - idx;
      double lam = 1.0 / w[j];
      std::vector<double> x = z[j];
      // LAPACK returns A-orthonormal vectors; rescale to unit B-energy.
      std::vector<double> tmp;
      spmv(B, x, tmp);
      double s = 1.0 / std::sqrt(dot(x, tmp));
      for (auto& v : x) v *= s;
      fix_sign(x);
      r.values.push_back(lam);
      r.vectors.push_back(std::move(x));
    }
    return r;
  }

  // Reduced boundary problem: with B = C^T C, the trace y = C x of an
  // eigenvector satisfies (C A^{-1} C^T) y = (1/lambda) y.
  SparseD C = boundary_factor(mesh, dm);
  int rdim = C.rows;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  llt.compute(to_eigen(A));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sparse factorization failed (matrix not positive definite?)");

  std::vector<double> S((std::size_t)rdim * rdim, 0.0);
  std::vector<std::vector<double>> ainv_ct(rdim);
  for (int j = 0; j < rdim; ++j) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int kk = C.row_ptr[j]; kk < C.row_ptr[j + 1]; ++kk)
      rhs[C.col_idx[kk]] += C.val[kk];
    Eigen::VectorXd sol = llt.solve(rhs);
    ainv_ct[j].assign(sol.data(), sol.data() + n);
    for (int i = 0; i < rdim; ++i) {
      double s = 0.0;
      for (int kk = C.row_ptr[i]; kk < C.row_ptr[i + 1]; ++kk)
        s += C.val[kk] * sol[C.col_idx[kk]];
      S[(std::size_t)j * rdim + i] = s;
    }
  }
  for (int q = 0; q < rdim; ++q)
    for (int p = q + 1; p < rdim; ++p) {
      double c = 0.5 * (S[(std::size_t)q * rdim + p] + S[(std::size_t)p * rdim + q]);
      S[(std::size_t)q * rdim + p] = S[(std::size_t)p * rdim + q] = c;
    }

  std::vector<double> mu;
  dense_syevd(S, rdim, mu, true);

  double mu_max = std::max(mu.back(), 0.0);
  EigResult r;
  for (int j = rdim - 1; j >= 0; --j) {
    if (!(mu[j] > opt.mu_cutoff * mu_max)) break;
    ++r.d_prime;
  }
  int kk = std::min(k, r.d_prime);
  for (int idx = 0; idx < kk; ++idx) {
    int j = rdim - 1 - idx;
    double lam = 1.0 / mu[j];
    // Recover x = A^{-1} C^T y and normalize to unit B-energy.
    std::vector<double> x(n, 0.0);
    for (int q = 0; q < rdim; ++q) {
      double s = S[(std::size_t)j * rdim + q];
      if (s == 0.0) continue;
      for (int i = 0; i < n; ++i) x[i] += s * ainv_ct[q][i];
    }
    std::vector<double> tmp;
    spmv(B, x, tmp);
    double s = 1.0 / std::sqrt(dot(x, tmp));
    for (auto& v : x) v *= s;
    fix_sign(x);
    r.values.push_back(lam);
    r.vectors.push_back(std::move(x));
  }
  return r;
}

}  // namespace eigbound
