#pragma once

#include <vector>

#include "eigbound/fem.hpp"
#include "eigbound/interval.hpp"

namespace eigbound {

// Result of a verified eigenvalue counting probe.
struct CountResult {
  int below = 0;          // eigenvalues strictly below sigma
  bool conclusive = false;  // false when a pivot interval straddled zero
};

// Number of pencil eigenvalues strictly below sigma, from the inertia of
// A - sigma B computed with an interval LDL^T factorization in profile
// storage under a reverse Cuthill-McKee ordering. Every arithmetic step is
// carried out in outward-rounded interval arithmetic, so a conclusive
// result is a mathematical certificate for the interval pencil (and hence
// for every point pencil inside it). A and B must be symmetric with equal
// sparsity-compatible dimensions; for positive definite A and positive
// semidefinite singular B the count covers the finite spectrum.
CountResult count_below(const SparseI& A, const SparseI& B, double sigma);

struct EncloseOptions {
  // Bisection stops when an endpoint gap falls below rel_width times the
  // magnitude of the approximation.
  double rel_width = 1e-13;
  // Probe budget per endpoint (ladder steps, nudges and bisections).
  int max_probes = 60;
  // When false the upper endpoints are left at +infinity and only lower
  // bounds are certified (cheaper on large pencils).
  bool need_upper = true;
};

// Verified enclosures of the lowest pencil eigenvalues. approx holds
// floating point approximations in ascending order; element j of the
// result is an interval certified (by counting probes) to contain the
// (j+1)-th lowest eigenvalue of the interval pencil (A, B). Throws
// std::runtime_error when certification fails within the probe budget.
std::vector<Interval> pencil_enclosure(const SparseI& A, const SparseI& B,
                                       const std::vector<double>& approx,
                                       const EncloseOptions& opt = {});

// Verified componentwise enclosure of the solution of M x = b computed by
// a Krawczyk contraction around a floating-point approximate inverse. M
// must be square and nonsingular; throws std::runtime_error when the
// contraction cannot be established or n exceeds dense_cap.
std::vector<Interval> solve_enclosure(const SparseI& M,
                                      const std::vector<Interval>& b,
                                      int dense_cap = 4096);

// Simultaneous enclosures for several right-hand sides against the same
// matrix. The approximate inverse and the contraction matrix are built
// once, so this is much cheaper than repeated single solves.
std::vector<std::vector<Interval>> solve_enclosure_multi(
    const SparseI& M, const std::vector<std::vector<Interval>>& rhs,
    int dense_cap = 4096);

}  // namespace eigbound
