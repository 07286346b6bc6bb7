#pragma once

#include <optional>
#include <vector>

#include "eigbound/eigsolve.hpp"
#include "eigbound/fem.hpp"
#include "eigbound/interval.hpp"
#include "eigbound/mesh.hpp"

namespace eigbound {

// Small dense symmetric interval matrix in row-major storage.
struct DenseI {
  int n = 0;
  std::vector<Interval> a;
  DenseI() = default;
  explicit DenseI(int n_) : n(n_), a((std::size_t)n_ * n_, Interval(0.0)) {}
  Interval& at(int i, int j) { return a[(std::size_t)i * n + j]; }
  const Interval& at(int i, int j) const { return a[(std::size_t)i * n + j]; }
};

// Ritz basis used as trial functions for the sharp bounds. Coefficient
// vectors live on the full dof set of dm; for essential boundary conditions
// the boundary entries are exactly zero, so every stored vector represents
// a conforming field with no interpolation error on the condition.
struct TrialBasis {
  Space space = Space::cg2;
  DofMap dm;
  std::vector<std::vector<double>> vecs;
  std::vector<double> ritz;
};

// Lowest discrete modes of the Dirichlet (essential) or boundary-weighted
// (natural) problem in the given continuous space, mass-orthonormalised.
TrialBasis select_trials_laplacian(const Mesh& mesh, Space trial_space, int n,
                                   const EigOptions& opt = {});
TrialBasis select_trials_steklov(const Mesh& mesh, Space trial_space, int n,
                                 const EigOptions& opt = {});

// Gram matrix v_i^T F v_j of an interval bilinear form over the trial
// vectors. Entries (i,j) and (j,i) are the identical interval.
DenseI trial_gram(const SparseI& form, const TrialBasis& tb);

// Auxiliary-field Gram matrices feeding the bound kernel.
//
// The plain Laplacian route solves the equilibration saddle problem (the
// minimum-energy field w with div w = -v holding exactly as polynomials) in
// verified arithmetic; its size is capped by the dense inverse of the
// Krawczyk solver. The shifted route reconstructs the flux approximately in
// floating point and accounts for the divergence residual exactly, which
// removes the size cap at the price of the shift parameter lambda_hat. The
// boundary-flow route matches the normal trace of the field to the trial
// data on the boundary exactly and minimises the interior energy in
// floating point (no certificate is needed for interior values).
//
// flux_out, when non-null, receives the flux coefficient vectors over the
// flux space dofmap (used by tests and diagnostics).
DenseI flux_gram_laplacian(const Mesh& mesh, const TrialBasis& tb,
                           Space flux_space, int dense_cap = 4096,
                           std::vector<std::vector<Interval>>* flux_out = nullptr);
DenseI flux_gram_laplacian_shifted(const Mesh& mesh, const TrialBasis& tb,
                                   Space flux_space, double lambda_hat,
                                   std::vector<std::vector<Interval>>* flux_out = nullptr);
DenseI flux_gram_steklov(const Mesh& mesh, const TrialBasis& tb, Space flux_space,
                         std::vector<std::vector<Interval>>* flux_out = nullptr);

struct LGOptions {
  // Enclosure sharpness target and probe budget for the small verified
  // pencil solves inside the kernel.
  double rel_width = 1e-9;
  int max_probes = 80;
};

// Output of the bound kernel. upper[j] always encloses the (j+1)-th Ritz
// value of the trial pencil, a certified upper bound for the (j+1)-th
// eigenvalue. When feasible, nu[k] encloses the (k+1)-th eigenvalue of the
// bound pencil and lower[k] holds the certified bound: with m eigenvalues
// counted below the shift, lower[k] bounds eigenvalue m-k from below.
struct LGResult {
  bool feasible = false;
  std::vector<Interval> upper;
  std::vector<Interval> nu;
  std::vector<Interval> lower;
};

// Verified spectral bound kernel. a0 and a1 are the energy and mass Grams
// of the trial functions, a2 the auxiliary Gram; the shift rho must satisfy
// rho <= lambda_{m+1} for the intended count m, which the caller certifies
// (stage-one bound or explicit acknowledgement). Feasibility, meaning every
// trial Rayleigh quotient lies strictly below rho, is certified internally
// by verified inertia counts; an infeasible call returns feasible=false
// with only the upper bounds filled. The lower bounds are computed along
// two algebraically equivalent routes with different conditioning and the
// results are intersected.
LGResult lg_bounds(const DenseI& a0, const DenseI& a1, const DenseI& a2,
                   double rho, const LGOptions& opt = {});

struct Stage2Options {
  Space trial_space = Space::cg2;
  Space flux_space = Space::rt2;
  int n_trials = 4;
  // Certified spectral count: rho <= lambda_{m_index+1} must hold, with the
  // certificate supplied upstream. Must be at least n_trials, since a
  // feasible run forces at least n_trials eigenvalues below rho.
  int m_index = 4;
  double rho = 0.0;
  // Positive values switch the Laplacian flux construction to the
  // floating-point reconstruction with exact residual accounting.
  double lambda_hat = 0.0;
  // When false, every quantity is evaluated in plain floating point (fast
  // uncertified study mode for convergence experiments).
  bool verified = true;
  // Size cap for the verified saddle solve of the plain Laplacian route.
  int dense_cap = 4096;
  LGOptions lg;
  EigOptions eig;
};

struct Stage2Result {
  bool feasible = false;
  // Floating-point Ritz values of the trial pencil, ascending.
  std::vector<double> ritz;
  // upper[i] encloses the (i+1)-th Ritz value, an upper bound for the
  // (i+1)-th eigenvalue.
  std::vector<Interval> upper;
  // Kernel pencil spectrum, ascending (empty when infeasible).
  std::vector<Interval> nu;
  // lower_by_eig[i] is the certified lower bound for eigenvalue i+1, or
  // empty when the kernel yields no bound for that index (indices at or
  // below m_index - n_trials). Bounds are clamped at zero, the trivial
  // bound for the problems covered here.
  std::vector<std::optional<Interval>> lower_by_eig;
};

// Sharp two-sided bounds for the Dirichlet Laplacian or the boundary-weight
// (Steklov) problem on the given mesh. The caller supplies the shift and
// its spectral-count certification via Stage2Options.
Stage2Result stage2_laplacian(const Mesh& mesh, const Stage2Options& opt);
Stage2Result stage2_steklov(const Mesh& mesh, const Stage2Options& opt);

}  // namespace eigbound
