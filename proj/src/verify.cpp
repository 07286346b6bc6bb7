#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "eigbound/verify.hpp"

extern "C" {
void dgetrf_(const int* m, const int* n, double* a, const int* lda, int* ipiv,
             int* info);
void dgetri_(const int* n, double* a, const int* lda, const int* ipiv,
             double* work, const int* lwork, int* info);
}

namespace eigbound {

namespace {

// Reverse Cuthill-McKee ordering of the symmetric pattern. Returns perm with
// perm[new_index] = old_index.
std::vector<int> rcm_order(const std::vector<std::vector<int>>& adj) {
  int n = (int)adj.size();
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> visited(n, 0);

  auto bfs_last_level = [&](int start, std::vector<char>& seen,
                            std::vector<int>& last) {
    std::fill(seen.begin(), seen.end(), 0);
    std::vector<int> cur = {start}, nxt;
    seen[start] = 1;
    int depth = 0;
    last = cur;
    while (!cur.empty()) {
      nxt.clear();
      for (int u : cur)
        for (int v : adj[u])
          if (!seen[v]) {
            seen[v] = 1;
            nxt.push_back(v);
          }
      if (nxt.empty()) break;
      last = nxt;
      cur.swap(nxt);
      ++depth;
    }
    return depth;
  };

  std::vector<char> seen(n, 0);
  for (int root = 0; root < n; ++root) {
    if (visited[root]) continue;
    // Pseudo-peripheral start: min degree in the component, then walk to
    // the far end of the level structure a couple of times.
    int s = root;
    {
      std::vector<int> last;
      int ecc = bfs_last_level(s, seen, last);
      for (int it = 0; it < 3; ++it) {
        int best = last[0];
        for (int v : last)
          if (adj[v].size() < adj[best].size()) best = v;
        std::vector<int> last2;
        int ecc2 = bfs_last_level(best, seen, last2);
        if (ecc2 <= ecc) break;
        ecc = ecc2;
        s = best;
        last.swap(last2);
      }
    }
    // Cuthill-McKee breadth-first sweep, neighbors by ascending degree.
    std::vector<int> queue = {s};
    visited[s] = 1;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      int u = queue[qi];
      order.push_back(u);
      std::vector<int> nb;
      for (int v : adj[u])
        if (!visited[v]) {
          visited[v] = 1;
          nb.push_back(v);
        }
      std::sort(nb.begin(), nb.end(), [&](int a, int b) {
        if (adj[a].size() != adj[b].size())
          return adj[a].size() < adj[b].size();
        return a < b;
      });
      for (int v : nb) queue.push_back(v);
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace

namespace {

constexpr double kUlp = 0x1p-53;

// Bound on the accumulated relative rounding error of m floating point
// operations (the standard gamma_m = m u / (1 - m u)).
double gamma_fp(int m) {
  double x = (double)m * kUlp;
  if (!(x < 0.5)) return std::numeric_limits<double>::infinity();
  return x / (1.0 - x);
}

enum : char { BK_SINGLE = 1, BK_PFIRST = 2, BK_PSECOND = 3 };

}  // namespace

// Counts the eigenvalues of the pencil below sigma through the inertia of
// Q = A - sigma B. An interval factorization of an indefinite Q is
// hopeless at this size: interval Gaussian elimination amplifies the
// entry widths exponentially once negative pivots appear. Instead the
// factorization runs in plain floating point and the inertia transfer is
// certified a posteriori:
//
//   Q = L D L^T + E,   inertia(L D L^T) = inertia(D)  (Sylvester),
//
// and inertia(Q) = inertia(D) provided ||E||_2 < sigma_min(L D L^T),
// because then the homotopy L D L^T + t E stays nonsingular on [0,1].
// The smallest singular value is bounded below by lambda_min(L |D| L^T)
// (for y = L^T x, |y^T D^{-1} y| <= y^T |D|^{-1} y blockwise), and that
// is certified by a floating Cholesky of L |D| L^T - beta I together
// with the standard backward error bound |dH| <= gamma |Lc||Lc|^T.
// Every norm and error constant is a rigorous overestimate, so an
// unlucky sigma can only make the result inconclusive, never wrong.
CountResult count_below(const SparseI& A, const SparseI& B, double sigma) {
  int n = A.rows;
  if (A.cols != n || B.rows != n || B.cols != n)
    throw std::invalid_argument("pencil dimension mismatch");
  if (n == 0) return {0, true};

  // Union adjacency of both patterns.
  std::vector<std::vector<int>> adj(n);
  auto add_pattern = [&](const SparseI& M) {
    for (int i = 0; i < n; ++i)
      for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k) {
        int j = M.col_idx[k];
        if (j != i) adj[i].push_back(j);
      }
  };
  add_pattern(A);
  add_pattern(B);
  for (auto& v : adj) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::vector<int> perm = rcm_order(adj);
  std::vector<int> inv(n);
  for (int i = 0; i < n; ++i) inv[perm[i]] = i;

  // Profile of the permuted matrix, widened by one column so that the
  // fill produced by 2x2 pivot blocks stays inside it.
  std::vector<int> first(n);
  for (int i2 = 0; i2 < n; ++i2) {
    int f = i2;
    for (int j : adj[perm[i2]]) f = std::min(f, inv[j]);
    first[i2] = std::max(0, f - 1);
  }
  std::vector<std::size_t> start(n + 1, 0);
  int maxw = 1;
  for (int i = 0; i < n; ++i) {
    start[i + 1] = start[i] + (i - first[i] + 1);
    maxw = std::max(maxw, i - first[i] + 1);
  }

  // Scatter Q = A - sigma B in interval arithmetic, then split into the
  // midpoint matrix (factored in floating point) and rigorous radius row
  // sums that feed the residual norm.
  std::vector<double> qmid(start[n], 0.0);
  std::vector<double> radrow(n, 0.0);
  {
    std::vector<Interval> qiv(start[n], Interval(0.0));
    auto at = [&](int i, int j) -> Interval& {
      return qiv[start[i] + (std::size_t)(j - first[i])];
    };
    Interval msig(-sigma);
    auto scatter = [&](const SparseI& M, bool shift) {
      for (int i = 0; i < n; ++i)
        for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k) {
          int j = M.col_idx[k];
          int i2 = inv[i], j2 = inv[j];
          if (j2 > i2) continue;  // symmetric partner handles it
          Interval v = M.val[k];
          if (shift) v = msig * v;
          at(i2, j2) = at(i2, j2) + v;
        }
    };
    scatter(A, false);
    scatter(B, true);
    for (int i = 0; i < n; ++i)
      for (int j = first[i]; j <= i; ++j) {
        const Interval& v = qiv[start[i] + (std::size_t)(j - first[i])];
        qmid[start[i] + (std::size_t)(j - first[i])] = v.mid();
        double w = v.hi - v.lo;  // covers |entry - mid| for any selection
        radrow[i] += w;
        if (j < i) radrow[j] += w;
      }
  }

  // Floating point block LDL^T with adjacent 2x2 pivots. The pivot
  // decision is deferred by one row: a diagonal that is small against its
  // coupling to the next row is merged into a 2x2 block, which absorbs
  // the near-zero pivots arising wherever a leading minor's eigenvalue
  // drifts through sigma.
  std::vector<double> lfac(qmid);
  std::vector<char> blk(n, 0);
  std::vector<double> dv(n, 0.0), qo(n, 0.0);
  {
    int pend = -1;
    double pdiag = 0.0;
    std::vector<double> srow;
    for (int i = 0; i < n; ++i) {
      int fi = first[i];
      int cc = (pend < 0) ? i : pend;
      srow.assign(lfac.begin() + start[i], lfac.begin() + start[i + 1]);
      auto sv = [&](int c) -> double { return c >= fi ? srow[c - fi] : 0.0; };
      auto lr = [&](int r, int c) -> double {
        return c >= first[r] ? lfac[start[r] + (std::size_t)(c - first[r])]
                             : 0.0;
      };
      auto accum = [&](int k, int stop) -> double {
        double acc = 0.0;
        int t = std::max(fi, first[k]);
        if (t < stop && blk[t] == BK_PSECOND) {
          int p = t - 1;
          double a0 = sv(p), a1 = sv(t);
          double b0 = lr(k, p), b1 = lr(k, t);
          acc += (a0 * dv[p] + a1 * qo[p]) * b0 + (a0 * qo[p] + a1 * dv[t]) * b1;
          ++t;
        }
        while (t < stop) {
          if (blk[t] == BK_SINGLE) {
            acc += srow[t - fi] * dv[t] * lr(k, t);
            ++t;
          } else {
            int u = t + 1;
            double a0 = srow[t - fi], a1 = srow[u - fi];
            double b0 = lr(k, t), b1 = lr(k, u);
            acc +=
                (a0 * dv[t] + a1 * qo[t]) * b0 + (a0 * qo[t] + a1 * dv[u]) * b1;
            t = u + 1;
          }
        }
        return acc;
      };
      {
        int c = fi;
        if (c < cc && blk[c] == BK_PSECOND) {
          double raw = srow[0] - accum(c, c - 1);
          double det = dv[c - 1] * dv[c] - qo[c - 1] * qo[c - 1];
          srow[0] = raw * dv[c - 1] / det;
          ++c;
        }
        while (c < cc) {
          if (blk[c] == BK_SINGLE) {
            double raw = srow[c - fi] - accum(c, c);
            srow[c - fi] = dv[c] != 0.0 ? raw / dv[c] : (raw == 0.0 ? 0.0 : raw / dv[c]);
            ++c;
          } else {
            int u = c + 1;
            double raw0 = srow[c - fi] - accum(c, c);
            double raw1 = srow[u - fi] - accum(u, c);
            double det = dv[c] * dv[u] - qo[c] * qo[c];
            srow[c - fi] = (raw0 * dv[u] - raw1 * qo[c]) / det;
            srow[u - fi] = (raw1 * dv[c] - raw0 * qo[c]) / det;
            c = u + 1;
          }
        }
      }
      double sdiag = srow[i - fi];
      {
        int t = fi;
        int stop = cc;
        if (t < stop && blk[t] == BK_PSECOND) {
          sdiag -= srow[0] * srow[0] * dv[t];
          ++t;
        }
        while (t < stop) {
          if (blk[t] == BK_SINGLE) {
            double a = srow[t - fi];
            sdiag -= a * a * dv[t];
            ++t;
          } else {
            int u = t + 1;
            double a0 = srow[t - fi], a1 = srow[u - fi];
            sdiag -= a0 * a0 * dv[t] + 2.0 * (a0 * a1) * qo[t] + a1 * a1 * dv[u];
            t = u + 1;
          }
        }
      }
      if (pend >= 0) {
        double sip = sv(pend) - accum(pend, pend);
        if (sip == 0.0 || std::fabs(pdiag) >= 0.25 * std::fabs(sip)) {
          blk[pend] = BK_SINGLE;
          dv[pend] = pdiag;
          double l = sip == 0.0 ? 0.0 : sip / pdiag;
          srow[pend - fi] = l;
          sdiag -= sip * l;
          pend = i;
          pdiag = sdiag;
        } else {
          blk[pend] = BK_PFIRST;
          blk[i] = BK_PSECOND;
          dv[pend] = pdiag;
          dv[i] = sdiag;
          qo[pend] = sip;
          srow[pend - fi] = 0.0;
          pend = -1;
        }
      } else {
        pend = i;
        pdiag = sdiag;
      }
      for (int c = fi; c < i; ++c) lfac[start[i] + (c - fi)] = srow[c - fi];
    }
    if (pend >= 0) {
      blk[pend] = BK_SINGLE;
      dv[pend] = pdiag;
    }
  }
  for (std::size_t t = 0; t < lfac.size(); ++t)
    if (!std::isfinite(lfac[t])) return {0, false};

  // Inertia of D with certified block signs, and an interval enclosure of
  // the block absolute value |D| (the 2x2 case uses the polynomial form
  // |P| = (tr/(2r)) P - (det/r) I valid for an indefinite block).
  int neg = 0;
  std::vector<Interval> ji00(n, Interval(0.0)), ji01(n, Interval(0.0)),
      ji11(n, Interval(0.0));
  double radjmax = 0.0;
  for (int t = 0; t < n;) {
    if (!std::isfinite(dv[t])) return {0, false};
    if (blk[t] == BK_SINGLE) {
      if (dv[t] < 0.0)
        ++neg;
      else if (!(dv[t] > 0.0))
        return {0, false};
      ji00[t] = Interval(std::fabs(dv[t]));
      ++t;
    } else {
      double a = dv[t], b = qo[t], c = dv[t + 1];
      if (!std::isfinite(b) || !std::isfinite(c)) return {0, false};
      Interval ia(a), ib(b), ic(c);
      Interval det = ia * ic - isqr(ib);
      if (det.hi < 0.0) {
        ++neg;
        Interval r = isqrt(isqr((ia - ic) * Interval(0.5)) + isqr(ib));
        if (!(r.lo > 0.0)) return {0, false};
        Interval s = (ia + ic) / (Interval(2.0) * r);
        Interval q = det / r;
        ji00[t] = s * ia - q;
        ji01[t] = s * ib;
        ji11[t] = s * ic - q;
      } else if (det.lo > 0.0) {
        Interval tr = ia + ic;
        if (tr.hi < 0.0) {
          neg += 2;
          ji00[t] = Interval(-a);
          ji01[t] = Interval(-b);
          ji11[t] = Interval(-c);
        } else if (tr.lo > 0.0) {
          ji00[t] = ia;
          ji01[t] = ib;
          ji11[t] = ic;
        } else {
          return {0, false};
        }
      } else {
        return {0, false};
      }
      radjmax = std::max(radjmax, ji00[t].hi - ji00[t].lo);
      radjmax = std::max(radjmax, ji01[t].hi - ji01[t].lo);
      radjmax = std::max(radjmax, ji11[t].hi - ji11[t].lo);
      t += 2;
    }
  }

  // One pass over the profile evaluates both the residual E = Q - L D L^T
  // (row sums of rigorous entry bounds) and the comparison matrix
  // C = L |D| L^T (floating values plus an error bound). The gamma terms
  // cover every rounding error of the accumulations.
  std::vector<double> cmat(start[n], 0.0);
  std::vector<double> erow(n, 0.0);
  std::vector<double> carow(n, 0.0);
  double gam = gamma_fp(6 * (maxw + 4));
  std::vector<double> jm00(n, 0.0), jm01(n, 0.0), jm11(n, 0.0);
  for (int t = 0; t < n; ++t) {
    jm00[t] = ji00[t].mid();
    jm01[t] = ji01[t].mid();
    jm11[t] = ji11[t].mid();
  }
  for (int i = 0; i < n; ++i) {
    int fi = first[i];
    auto lv = [&](int r, int c) -> double {
      if (c == r) return 1.0;
      if (c > r || c < first[r]) return 0.0;
      return lfac[start[r] + (std::size_t)(c - first[r])];
    };
    for (int j = fi; j <= i; ++j) {
      double acce = 0.0, aacce = 0.0, accc = 0.0, aaccc = 0.0;
      int t = std::max(fi, first[j]);
      if (blk[t] == BK_PSECOND) --t;
      while (t <= j) {
        if (blk[t] == BK_SINGLE) {
          double p = lv(i, t) * lv(j, t);
          double ap = std::fabs(p);
          acce += p * dv[t];
          aacce += ap * std::fabs(dv[t]);
          accc += p * jm00[t];
          aaccc += ap * jm00[t];
          ++t;
        } else {
          int u = t + 1;
          double li0 = lv(i, t), li1 = lv(i, u);
          double lj0 = lv(j, t), lj1 = lv(j, u);
          double t00 = li0 * lj0, t11 = li1 * lj1;
          double t01 = li0 * lj1 + li1 * lj0;
          double a00 = std::fabs(t00), a11 = std::fabs(t11);
          double a01 = std::fabs(li0 * lj1) + std::fabs(li1 * lj0);
          acce += t00 * dv[t] + t01 * qo[t] + t11 * dv[u];
          aacce += a00 * std::fabs(dv[t]) + a01 * std::fabs(qo[t]) +
                   a11 * std::fabs(dv[u]);
          accc += t00 * jm00[t] + t01 * jm01[t] + t11 * jm11[t];
          aaccc += a00 * std::fabs(jm00[t]) + a01 * std::fabs(jm01[t]) +
                   a11 * std::fabs(jm11[t]);
          t = u + 1;
        }
      }
      double q = qmid[start[i] + (std::size_t)(j - fi)];
      double eb = std::fabs(q - acce) + gam * (aacce + std::fabs(q));
      erow[i] += eb;
      if (j < i) erow[j] += eb;
      cmat[start[i] + (std::size_t)(j - fi)] = accc;
      double cb = gam * aaccc;
      carow[i] += cb;
      if (j < i) carow[j] += cb;
    }
  }

  // ||L|| row and column absolute sums (unit diagonal included) bound the
  // term |L| rad(J) |L|^T of the comparison matrix error.
  double cushion = 1.0 + 1e-7;
  double normE, errC;
  {
    double linf = 0.0, lone = 0.0;
    std::vector<double> colsum(n, 1.0);
    for (int i = 0; i < n; ++i) {
      double rs = 1.0;
      for (int c = first[i]; c < i; ++c) {
        double v = std::fabs(lfac[start[i] + (std::size_t)(c - first[i])]);
        rs += v;
        colsum[c] += v;
      }
      linf = std::max(linf, rs);
    }
    for (int c = 0; c < n; ++c) lone = std::max(lone, colsum[c]);
    double emax = 0.0, camax = 0.0, cdiag = 0.0;
    for (int i = 0; i < n; ++i) {
      emax = std::max(emax, erow[i] + radrow[i]);
      camax = std::max(camax, carow[i]);
      cdiag = std::max(cdiag, std::fabs(cmat[start[i] + (std::size_t)(i - first[i])]));
    }
    normE = emax * cushion;
    errC = (camax + linf * (2.0 * radjmax) * lone + kUlp * cdiag) * cushion;
    if (!std::isfinite(normE) || !std::isfinite(errC)) return {0, false};
  }

  // Estimate lambda_min(C) by inverse power iteration using the block
  // factors, then certify C - beta I positive definite by a floating
  // Cholesky plus its backward error bound.
  double lam_est = 0.0;
  {
    std::vector<double> z(n);
    unsigned long long s = 0x9e3779b97f4a7c15ull;
    for (auto& v : z) {
      s = s * 6364136223846793005ull + 1442695040888963407ull;
      v = ((double)(s >> 11) / 9007199254740992.0) - 0.5;
    }
    auto nrm2 = [&](const std::vector<double>& x) {
      double t = 0.0;
      for (double v : x) t += v * v;
      return std::sqrt(t);
    };
    for (int it = 0; it < 12; ++it) {
      double nn = nrm2(z);
      if (!(nn > 0.0) || !std::isfinite(nn)) {
        lam_est = 0.0;
        break;
      }
      for (auto& v : z) v /= nn;
      for (int i = 0; i < n; ++i) {
        double sv = z[i];
        for (int c = first[i]; c < i; ++c)
          sv -= lfac[start[i] + (std::size_t)(c - first[i])] * z[c];
        z[i] = sv;
      }
      for (int t = 0; t < n;) {
        if (blk[t] == BK_SINGLE) {
          z[t] /= jm00[t];
          ++t;
        } else {
          double det = jm00[t] * jm11[t] - jm01[t] * jm01[t];
          double z0 = (jm11[t] * z[t] - jm01[t] * z[t + 1]) / det;
          double z1 = (jm00[t] * z[t + 1] - jm01[t] * z[t]) / det;
          z[t] = z0;
          z[t + 1] = z1;
          t += 2;
        }
      }
      for (int i = n - 1; i >= 0; --i) {
        double xi = z[i];
        for (int c = first[i]; c < i; ++c)
          z[c] -= lfac[start[i] + (std::size_t)(c - first[i])] * xi;
      }
      double nn2 = nrm2(z);
      if (!(nn2 > 0.0) || !std::isfinite(nn2)) {
        lam_est = 0.0;
        break;
      }
      lam_est = 1.0 / nn2;
    }
  }
  if (!(lam_est > 0.0)) return {0, false};

  double gchol = gamma_fp(maxw + 4);
  std::vector<double> h(start[n]);
  double beta = 0.5 * lam_est;
  for (int attempt = 0; attempt < 4 && beta > 0.0; ++attempt, beta *= 0.125) {
    h = cmat;
    for (int i = 0; i < n; ++i) h[start[i] + (std::size_t)(i - first[i])] -= beta;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      int fi = first[i];
      for (int j = fi; j < i; ++j) {
        double s = h[start[i] + (std::size_t)(j - fi)];
        int k0 = std::max(fi, first[j]);
        for (int k = k0; k < j; ++k)
          s -= h[start[i] + (std::size_t)(k - fi)] *
               h[start[j] + (std::size_t)(k - first[j])];
        h[start[i] + (std::size_t)(j - fi)] =
            s / h[start[j] + (std::size_t)(j - first[j])];
      }
      double s = h[start[i] + (std::size_t)(i - fi)];
      for (int k = fi; k < i; ++k) {
        double v = h[start[i] + (std::size_t)(k - fi)];
        s -= v * v;
      }
      if (!(s > 0.0) || !std::isfinite(s)) {
        ok = false;
        break;
      }
      h[start[i] + (std::size_t)(i - fi)] = std::sqrt(s);
    }
    if (!ok) continue;
    double linfc = 0.0, lonec = 0.0;
    {
      std::vector<double> colc(n, 0.0);
      for (int i = 0; i < n; ++i) {
        double rs = 0.0;
        for (int j = first[i]; j <= i; ++j) {
          double v = std::fabs(h[start[i] + (std::size_t)(j - first[i])]);
          rs += v;
          colc[j] += v;
        }
        linfc = std::max(linfc, rs);
      }
      for (int c = 0; c < n; ++c) lonec = std::max(lonec, colc[c]);
    }
    double dchol = gchol * linfc * lonec * cushion;
    double tau = beta * (1.0 - 2.0 * kUlp) - dchol - errC;
    if (std::isfinite(tau) && normE < tau) return {neg, true};
    // A smaller beta cannot improve tau; certification failed.
    return {0, false};
  }
  return {0, false};
}

namespace {

struct Prober {
  const SparseI& A;
  const SparseI& B;
  int used = 0;
  int budget = 0;

  // Probe at sigma; on an inconclusive factorization move sigma away from
  // the sheltered eigenvalue in small relative steps.
  std::optional<std::pair<double, int>> probe(double sigma, double away,
                                              int max_nudge) {
    double s = sigma;
    double scale = std::max(std::fabs(sigma), 1e-300);
    for (int t = 0; t <= max_nudge && used < budget; ++t) {
      CountResult c = count_below(A, B, s);
      ++used;
      if (c.conclusive) return std::make_pair(s, c.below);
      s += away * std::ldexp(scale, -20);
    }
    return std::nullopt;
  }
};

}  // namespace

std::vector<Interval> pencil_enclosure(const SparseI& A, const SparseI& B,
                                       const std::vector<double>& approx,
                                       const EncloseOptions& opt) {
  std::vector<Interval> out;
  out.reserve(approx.size());
  double inf = std::numeric_limits<double>::infinity();

  for (int k = 0; k < (int)approx.size(); ++k) {
    double lam = approx[k];
    double scale = std::max(std::fabs(lam), 1e-30);
    Prober pr{A, B, 0, opt.max_probes};

    // Lower endpoint: the largest certified sigma with at most k
    // eigenvalues below it.
    double lo = -inf;
    {
      double ceil_t = lam;
      for (double eps = std::max(opt.rel_width, 1e-13); eps < 1.6; eps *= 25.0) {
        auto res = pr.probe(lam - eps * scale, -1.0, 2);
        if (!res) continue;
        if (res->second <= k) {
          lo = res->first;
          break;
        }
        ceil_t = res->first;
      }
      if (std::isinf(lo))
        throw std::runtime_error("eigenvalue lower bound certification failed");
      while (ceil_t - lo > opt.rel_width * scale && pr.used < pr.budget) {
        double mid = 0.5 * (lo + ceil_t);
        if (!(mid > lo && mid < ceil_t)) break;
        auto res = pr.probe(mid, -1.0, 0);
        if (!res) break;
        if (res->second <= k)
          lo = res->first;
        else
          ceil_t = res->first;
      }
    }

    // Upper endpoint: the smallest certified sigma with at least k+1
    // eigenvalues below it.
    double hi = inf;
    if (opt.need_upper) {
      Prober pu{A, B, 0, opt.max_probes};
      double floor_t = lam;
      for (double eps = std::max(opt.rel_width, 1e-13); eps < 1.6; eps *= 25.0) {
        auto res = pu.probe(lam + eps * scale, +1.0, 2);
        if (!res) continue;
        if (res->second >= k + 1) {
          hi = res->first;
          break;
        }
        floor_t = res->first;
      }
      if (std::isinf(hi))
        throw std::runtime_error("eigenvalue upper bound certification failed");
      while (hi - floor_t > opt.rel_width * scale && pu.used < pu.budget) {
        double mid = 0.5 * (floor_t + hi);
        if (!(mid > floor_t && mid < hi)) break;
        auto res = pu.probe(mid, +1.0, 0);
        if (!res) break;
        if (res->second >= k + 1)
          hi = res->first;
        else
          floor_t = res->first;
      }
    }

    out.push_back(Interval(lo, hi));
  }
  return out;
}

std::vector<std::vector<Interval>> solve_enclosure_multi(
    const SparseI& M, const std::vector<std::vector<Interval>>& rhs,
    int dense_cap) {
  int n = M.rows;
  if (M.cols != n) throw std::invalid_argument("linear system dimension mismatch");
  for (const auto& b : rhs)
    if ((int)b.size() != n)
      throw std::invalid_argument("linear system dimension mismatch");
  if (n > dense_cap)
    throw std::runtime_error("system exceeds the dense inverse cap");
  if (rhs.empty()) return {};

  // Approximate inverse of the midpoint matrix.
  std::vector<double> a((std::size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k)
      a[(std::size_t)M.col_idx[k] * n + i] = M.val[k].mid();
  std::vector<int> ipiv(n);
  int info = 0;
  dgetrf_(&n, &n, a.data(), &n, ipiv.data(), &info);
  if (info != 0) throw std::runtime_error("midpoint matrix is singular");
  {
    int lwork = -1;
    double wk = 0.0;
    dgetri_(&n, a.data(), &n, ipiv.data(), &wk, &lwork, &info);
    lwork = (int)wk;
    std::vector<double> work(std::max(1, lwork));
    dgetri_(&n, a.data(), &n, ipiv.data(), work.data(), &lwork, &info);
    if (info != 0) throw std::runtime_error("midpoint matrix is singular");
  }
  auto R = [&](int i, int j) { return a[(std::size_t)j * n + i]; };

  // G = I - R M as a dense interval matrix (row-major), shared by all
  // right-hand sides.
  std::vector<Interval> G((std::size_t)n * n, Interval(0.0));
  for (int row = 0; row < n; ++row)
    for (int k = M.row_ptr[row]; k < M.row_ptr[row + 1]; ++k) {
      int j = M.col_idx[k];
      Interval mv = M.val[k];
      for (int i = 0; i < n; ++i)
        G[(std::size_t)i * n + j] = G[(std::size_t)i * n + j] - Interval(R(i, row)) * mv;
    }
  for (int i = 0; i < n; ++i)
    G[(std::size_t)i * n + i] = G[(std::size_t)i * n + i] + Interval(1.0);

  std::vector<std::vector<Interval>> outs;
  outs.reserve(rhs.size());
  for (const std::vector<Interval>& b : rhs) {
    // Approximate solution x0 = R mid(b).
    std::vector<double> bm(n);
    for (int i = 0; i < n; ++i) bm[i] = b[i].mid();
    std::vector<double> x0(n, 0.0);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) x0[i] += R(i, j) * bm[j];

    // Residual r = b - M x0 and its preconditioned image z = R r.
    std::vector<Interval> r(b);
    for (int i = 0; i < n; ++i)
      for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k)
        r[i] = r[i] - M.val[k] * Interval(x0[M.col_idx[k]]);
    std::vector<Interval> z(n, Interval(0.0));
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) z[i] = z[i] + Interval(R(i, j)) * r[j];

    // Krawczyk contraction with epsilon inflation: a solution enclosure in
    // delta coordinates satisfies X >= z + G X.
    std::vector<Interval> X(z), K(n, Interval(0.0));
    double eta = 16.0 * std::numeric_limits<double>::min();
    bool done = false;
    for (int iter = 0; iter < 30 && !done; ++iter) {
      for (int i = 0; i < n; ++i) {
        double w = X[i].hi - X[i].lo;
        double delta = 0.2 * w + 1e-18 * std::max(1.0, X[i].mag()) + eta;
        X[i] = Interval(X[i].lo - delta, X[i].hi + delta);
      }
      bool inside = true;
      for (int i = 0; i < n; ++i) {
        Interval s = z[i];
        const Interval* gi = &G[(std::size_t)i * n];
        for (int j = 0; j < n; ++j) s = s + gi[j] * X[j];
        K[i] = s;
        if (!(s.lo > X[i].lo && s.hi < X[i].hi)) inside = false;
      }
      if (inside) {
        // Two refinement sweeps tighten the certified box.
        for (int sweep = 0; sweep < 2; ++sweep) {
          for (int i = 0; i < n; ++i) {
            Interval s = z[i];
            const Interval* gi = &G[(std::size_t)i * n];
            for (int j = 0; j < n; ++j) s = s + gi[j] * K[j];
            K[i] = intersect(K[i], s);
          }
        }
        std::vector<Interval> out(n);
        for (int i = 0; i < n; ++i) out[i] = Interval(x0[i]) + K[i];
        outs.push_back(std::move(out));
        done = true;
        break;
      }
      X = K;
    }
    if (!done) throw std::runtime_error("interval linear solve did not contract");
  }
  return outs;
}

std::vector<Interval> solve_enclosure(const SparseI& M,
                                      const std::vector<Interval>& b,
                                      int dense_cap) {
  return solve_enclosure_multi(M, {b}, dense_cap).front();
}

}  // namespace eigbound
