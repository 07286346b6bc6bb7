#pragma once

#include <vector>

#include "eigbound/eigsolve.hpp"
#include "eigbound/interval.hpp"
#include "eigbound/mesh.hpp"
#include "eigbound/verify.hpp"

namespace eigbound {

// Projection constant of the nonconforming edge-midpoint interpolation for
// the Dirichlet Laplacian, as a rigorous enclosure computed from the exact
// vertex coordinates (0.1893 times the longest edge).
Interval ch_laplacian(const Mesh& mesh);

// Steklov variant. Requires one boundary edge per boundary element; the
// trace term takes the elementwise maximum of h_K over the square root of
// the height above the boundary edge, and the bulk term divides by the
// square root of a certified lower bound of the first discrete eigenvalue
// on the same mesh.
Interval ch_steklov(const Mesh& mesh, double lambda1h_lower);

// Rough eigenvalue lower bound lambda >= lambda_h / (1 + ch^2 lambda_h)
// from a certified lower endpoint of the discrete eigenvalue. Nonpositive
// inputs degrade to the trivial bound zero.
Interval cr_lower_bound(double lambda_h_lower, const Interval& ch);

struct Stage1Options {
  int k = 6;                // number of certified eigenvalues
  double rel_width = 1e-5;  // sharpness of the discrete lower endpoints
  int max_probes = 60;
  EigOptions eig;
};

struct Stage1Result {
  Interval ch;                      // projection constant of the mesh
  std::vector<double> lambda_h;     // discrete eigenvalue approximations
  std::vector<double> lambda_h_lo;  // certified lower endpoints of those
  std::vector<double> lower;        // certified lower bounds for lambda_k
};

// Rough certified lower bounds for the Dirichlet Laplacian on the mesh
// (edge-midpoint elements, boundary dofs eliminated).
Stage1Result stage1_laplacian(const Mesh& mesh, const Stage1Options& opt = {});

// Rough certified lower bounds for the Steklov problem. When the mesh
// violates the single-boundary-edge precondition the fixup refinement is
// applied to an internal copy first.
Stage1Result stage1_steklov(const Mesh& mesh, const Stage1Options& opt = {});

}  // namespace eigbound
