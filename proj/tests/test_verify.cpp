#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "eigbound/eigsolve.hpp"
#include "eigbound/fem.hpp"
#include "eigbound/verify.hpp"

using namespace eigbound;

namespace {

SparseI diag_iv(const std::vector<double>& d) {
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  for (int i = 0; i < (int)d.size(); ++i)
    t.push_back({{i, i}, Interval(d[i])});
  return SparseI::from_triplets((int)d.size(), (int)d.size(), std::move(t));
}

SparseI to_interval_matrix(const SparseD& m) {
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  for (int i = 0; i < m.rows; ++i)
    for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
      t.push_back({{i, m.col_idx[k]}, Interval(m.val[k])});
  return SparseI::from_triplets(m.rows, m.cols, std::move(t));
}

SparseD dense_to_sparse(const std::vector<double>& a, int n) {
  std::vector<std::pair<std::pair<int, int>, double>> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a[(std::size_t)i * n + j] != 0.0)
        t.push_back({{i, j}, a[(std::size_t)i * n + j]});
  return SparseD::from_triplets(n, n, std::move(t));
}

}  // namespace

TEST_CASE("eigenvalue counts on diagonal pencils", "[verify]") {
  SparseI A = diag_iv({1, 2, 3, 4, 5});
  SparseI B = diag_iv({1, 1, 1, 1, 1});
  auto c = count_below(A, B, 3.5);
  REQUIRE(c.conclusive);
  CHECK(c.below == 3);
  c = count_below(A, B, 0.5);
  REQUIRE(c.conclusive);
  CHECK(c.below == 0);
  c = count_below(A, B, 100.0);
  REQUIRE(c.conclusive);
  CHECK(c.below == 5);
  // Probing exactly at an eigenvalue gives a zero pivot: inconclusive.
  c = count_below(A, B, 3.0);
  CHECK_FALSE(c.conclusive);
}

TEST_CASE("counts cover only the finite spectrum for singular B", "[verify]") {
  // Third equation has no B weight: its eigenvalue is infinite.
  SparseI A = diag_iv({1, 2, 3});
  SparseI B = diag_iv({1, 1, 0});
  auto c = count_below(A, B, 2.5);
  REQUIRE(c.conclusive);
  CHECK(c.below == 2);
  c = count_below(A, B, 1.5);
  REQUIRE(c.conclusive);
  CHECK(c.below == 1);
  c = count_below(A, B, 1e6);
  REQUIRE(c.conclusive);
  CHECK(c.below == 2);
}

TEST_CASE("counts match a dense solver on random pencils", "[verify]") {
  std::mt19937_64 rng(991);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + (int)(rng() % 11);
    std::vector<double> a((std::size_t)n * n), l((std::size_t)n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        double v = U(rng);
        a[(std::size_t)i * n + j] = a[(std::size_t)j * n + i] = v;
        l[(std::size_t)i * n + j] = U(rng);
      }
    // B = L L^T + I is safely positive definite.
    std::vector<double> b((std::size_t)n * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = (i == j) ? 1.0 : 0.0;
        for (int k = 0; k < n; ++k)
          s += l[(std::size_t)i * n + k] * l[(std::size_t)j * n + k];
        b[(std::size_t)i * n + j] = s;
      }
    SparseD Ad = dense_to_sparse(a, n);
    SparseD Bd = dense_to_sparse(b, n);
    EigResult full = lowest_pairs(Ad, Bd, n);
    REQUIRE((int)full.values.size() == n);

    // Probe midpoints of spectral gaps and points beyond both ends.
    std::vector<double> probes;
    probes.push_back(full.values.front() - 0.7);
    probes.push_back(full.values.back() + 0.7);
    for (int k = 0; k + 1 < n; ++k) {
      double gap = full.values[k + 1] - full.values[k];
      if (gap > 1e-6)
        probes.push_back(0.5 * (full.values[k] + full.values[k + 1]));
    }
    SparseI Ai = to_interval_matrix(Ad);
    SparseI Bi = to_interval_matrix(Bd);
    for (double sigma : probes) {
      auto c = count_below(Ai, Bi, sigma);
      REQUIRE(c.conclusive);
      int expect = 0;
      for (double v : full.values)
        if (v < sigma) ++expect;
      CHECK(c.below == expect);
    }
  }
}

TEST_CASE("enclosures bracket a clustered diagonal spectrum", "[verify]") {
  SparseI A = diag_iv({1, 2, 2, 3});
  SparseI B = diag_iv({1, 1, 1, 1});
  std::vector<double> approx = {1, 2, 2, 3};
  auto enc = pencil_enclosure(A, B, approx);
  REQUIRE(enc.size() == 4);
  std::vector<double> exact = {1, 2, 2, 3};
  for (int k = 0; k < 4; ++k) {
    CHECK(enc[k].lo <= exact[k]);
    CHECK(enc[k].hi >= exact[k]);
    CHECK(enc[k].hi - enc[k].lo < 1e-9 * exact[k]);
  }
}

TEST_CASE("enclosures contain the discrete eigenvalues of a stiffness pencil",
          "[verify]") {
  Mesh m = uniform_square(8);
  DofMap dm = build_dofmap(m, Space::cr);
  auto imap = interior_map(dm);
  int ni = count_interior(dm);
  SparseD A = restrict_map(assemble_grad_grad(m, dm), imap, ni, imap, ni);
  SparseD M = restrict_map(assemble_mass(m, dm), imap, ni, imap, ni);
  SparseI Ai = restrict_map(assemble_grad_grad_iv(m, dm), imap, ni, imap, ni);
  SparseI Mi = restrict_map(assemble_mass_iv(m, dm), imap, ni, imap, ni);

  EigResult r = lowest_pairs(A, M, 4);
  auto enc = pencil_enclosure(Ai, Mi, r.values);
  REQUIRE(enc.size() == 4);
  for (int k = 0; k < 4; ++k) {
    // Floating point eigenvalues of the midpoint pencil lie inside the
    // rigorous enclosure up to solver roundoff.
    CHECK(r.values[k] >= enc[k].lo - 1e-9 * r.values[k]);
    CHECK(r.values[k] <= enc[k].hi + 1e-9 * r.values[k]);
    CHECK(enc[k].hi - enc[k].lo < 1e-8 * r.values[k]);
  }
  // Enclosures of distinct eigenvalues must be ordered.
  CHECK(enc[0].hi < enc[1].lo);
}

TEST_CASE("lower-only enclosures leave the upper endpoint open", "[verify]") {
  SparseI A = diag_iv({1, 2, 3});
  SparseI B = diag_iv({1, 1, 1});
  EncloseOptions opt;
  opt.need_upper = false;
  auto enc = pencil_enclosure(A, B, {1, 2, 3}, opt);
  REQUIRE(enc.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(enc[k].lo <= k + 1.0);
    CHECK(enc[k].lo > k + 1.0 - 1e-6);
    CHECK(std::isinf(enc[k].hi));
  }
}

TEST_CASE("enclosures work for the boundary-weight pencil", "[verify]") {
  Mesh m = steklov_fixup(uniform_square(4));
  DofMap dm = build_dofmap(m, Space::cr);
  SparseD A = assemble_grad_grad(m, dm);
  SparseD M = assemble_mass(m, dm);
  std::vector<std::pair<std::pair<int, int>, double>> t;
  for (int i = 0; i < A.rows; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      t.push_back({{i, A.col_idx[k]}, A.val[k]});
  for (int i = 0; i < M.rows; ++i)
    for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k)
      t.push_back({{i, M.col_idx[k]}, M.val[k]});
  SparseD Astk = SparseD::from_triplets(A.rows, A.cols, std::move(t));
  SparseD B = assemble_boundary_mass(m, dm);
  SparseI Ai = to_interval_matrix(Astk);
  SparseI Bi = to_interval_matrix(B);

  EigResult r = lowest_pairs_singular_b(Astk, B, 3, m, dm);
  REQUIRE((int)r.values.size() >= 3);
  std::vector<double> approx(r.values.begin(), r.values.begin() + 3);
  auto enc = pencil_enclosure(Ai, Bi, approx);
  for (int k = 0; k < 3; ++k) {
    CHECK(approx[k] >= enc[k].lo - 1e-9 * approx[k]);
    CHECK(approx[k] <= enc[k].hi + 1e-9 * approx[k]);
    CHECK(enc[k].hi - enc[k].lo < 1e-7 * approx[k]);
  }
}

TEST_CASE("linear solve enclosures contain the rational solution", "[verify]") {
  // 2x2 system with solution (1/5, 3/5).
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  t.push_back({{0, 0}, Interval(2.0)});
  t.push_back({{0, 1}, Interval(1.0)});
  t.push_back({{1, 0}, Interval(1.0)});
  t.push_back({{1, 1}, Interval(3.0)});
  SparseI M = SparseI::from_triplets(2, 2, std::move(t));
  std::vector<Interval> b = {Interval(1.0), Interval(2.0)};
  auto x = solve_enclosure(M, b);
  REQUIRE(x.size() == 2);
  Rat x0(1, 5), x1(3, 5);
  CHECK(x0.compare(x[0].lo) >= 0);
  CHECK(x0.compare(x[0].hi) <= 0);
  CHECK(x1.compare(x[1].lo) >= 0);
  CHECK(x1.compare(x[1].hi) <= 0);
  CHECK(x[0].hi - x[0].lo < 1e-12);
}

TEST_CASE("solve enclosures have residuals straddling zero", "[verify]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int n = 50;
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  std::vector<std::vector<double>> dense(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double v = U(rng);
      if (i == j) v += 2.0 * n;  // diagonally dominant, hence nonsingular
      dense[i][j] = v;
      t.push_back({{i, j}, Interval(v)});
    }
  SparseI M = SparseI::from_triplets(n, n, std::move(t));
  std::vector<Interval> b;
  for (int i = 0; i < n; ++i) b.push_back(Interval(U(rng)));
  auto x = solve_enclosure(M, b);
  REQUIRE((int)x.size() == n);
  for (int i = 0; i < n; ++i) {
    Interval r = -b[i];
    for (int j = 0; j < n; ++j) r = r + Interval(dense[i][j]) * x[j];
    CHECK(r.lo <= 0.0);
    CHECK(r.hi >= 0.0);
  }
}

TEST_CASE("singular systems are rejected", "[verify]") {
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  t.push_back({{0, 0}, Interval(1.0)});
  t.push_back({{0, 1}, Interval(1.0)});
  t.push_back({{1, 0}, Interval(1.0)});
  t.push_back({{1, 1}, Interval(1.0)});
  SparseI M = SparseI::from_triplets(2, 2, std::move(t));
  std::vector<Interval> b = {Interval(1.0), Interval(0.0)};
  CHECK_THROWS(solve_enclosure(M, b));
}

TEST_CASE("simultaneous right-hand sides match the single solver", "[verify]") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int n = 12;
  std::vector<std::pair<std::pair<int, int>, Interval>> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double v = U(rng);
      if (i == j) v += 2.0 * n;
      t.push_back({{i, j}, Interval(v)});
    }
  SparseI M = SparseI::from_triplets(n, n, std::move(t));
  std::vector<std::vector<Interval>> bs(3);
  for (auto& b : bs)
    for (int i = 0; i < n; ++i) b.push_back(Interval(U(rng)));
  auto xs = solve_enclosure_multi(M, bs);
  REQUIRE(xs.size() == 3);
  for (int r = 0; r < 3; ++r) {
    auto single = solve_enclosure(M, bs[r]);
    REQUIRE(xs[r].size() == single.size());
    for (int i = 0; i < n; ++i) {
      CHECK(xs[r][i].lo == single[i].lo);
      CHECK(xs[r][i].hi == single[i].hi);
    }
  }
}
