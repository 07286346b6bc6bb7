#pragma once

#include <vector>

#include "eigbound/fem.hpp"
#include "eigbound/mesh.hpp"

namespace eigbound {

struct EigOptions {
  // At or below this dimension the dense LAPACK path is used; above it a
  // shift-invert Lanczos iteration on sparse Cholesky factors takes over.
  int dense_cap = 2000;
  // Krylov subspace size beyond the requested count.
  int lanczos_extra = 60;
  // Relative cutoff separating finite pencil eigenvalues from the infinite
  // ones when the right-hand side form is singular.
  double mu_cutoff = 1e-12;
};

// Eigenpairs of A x = lambda B x, values ascending, vectors B-orthonormal
// with the largest-magnitude entry positive.
struct EigResult {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
  // Number of finite eigenvalues of the pencil (equals the dimension unless
  // the right-hand side form is singular).
  int d_prime = 0;
};

// A symmetric positive definite, B symmetric positive definite (mass-like).
// Lowest k eigenpairs.
EigResult lowest_pairs(const SparseD& A, const SparseD& B, int k,
                       const EigOptions& opt = {});

// A symmetric positive definite, B positive semidefinite of boundary-mass
// type for the given scalar space (its energy vanishes on functions with
// zero boundary trace). Returns the lowest k finite eigenvalues; d_prime
// reports how many finite eigenvalues the pencil has. The mesh/dofmap pair
// must be the one B was assembled from.
EigResult lowest_pairs_singular_b(const SparseD& A, const SparseD& B, int k,
                                  const Mesh& mesh, const DofMap& dm,
                                  const EigOptions& opt = {});

// All eigenvalues ascending of a dense symmetric matrix (row-major, n x n).
std::vector<double> dense_symmetric_eigenvalues(std::vector<double> a, int n);

}  // namespace eigbound
