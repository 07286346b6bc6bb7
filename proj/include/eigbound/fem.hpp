#pragma once

#include <array>
#include <vector>

#include "eigbound/exact.hpp"
#include "eigbound/interval.hpp"
#include "eigbound/mesh.hpp"

namespace eigbound {

// Finite element spaces on triangles. Scalar Lagrange families (continuous
// cg*, the nonconforming edge-midpoint space cr, discontinuous dg*) and the
// H(div)-conforming Raviart-Thomas family rt*.
enum class Space {
  cg1,
  cg2,
  cg3,
  cr,
  dg0,
  dg1,
  dg2,
  dg3,
  rt0,
  rt1,
  rt2,
};

int space_degree(Space s);
bool space_is_rt(Space s);
bool space_is_dg(Space s);
bool space_is_continuous(Space s);

// Reference element data for a scalar space: basis polynomials on the unit
// triangle and exact integral tables. Local edge l runs from local vertex
// (l+1)%3 to (l+2)%3 (counterclockwise); edge tables are parametrised by
// t in [0,1] along that direction.
struct ScalarRef {
  int nloc = 0;
  std::vector<Poly2> basis;
  // Local dofs whose trace on edge l is nonzero, endpoints first
  // (vertex at t=0, vertex at t=1), then edge-interior dofs ordered by t.
  std::array<std::vector<int>, 3> edge_dofs;
  // Traces of all local basis functions on edge l.
  std::array<std::vector<Poly1>, 3> edge_trace;

  // Exact tables (row-major nloc x nloc).
  std::vector<Rat> mass;
  // Gradient products split by component: [0]=xx, [1]=xy, [2]=yx, [3]=yy,
  // entry (i,j) = integral of d_a phi_i * d_b phi_j.
  std::array<std::vector<Rat>, 4> grad;
  // Edge mass per local edge (zero rows/cols off the edge), in the unit
  // parametrisation (multiply by |e| to get the physical integral).
  std::array<std::vector<Rat>, 3> edge_mass;

  // Interval enclosures of the tables above, plus double midpoints for the
  // floating-point assembly path.
  std::vector<Interval> mass_iv;
  std::array<std::vector<Interval>, 4> grad_iv;
  std::array<std::vector<Interval>, 3> edge_mass_iv;
};

const ScalarRef& scalar_ref(Space s);

// Reference element data for a Raviart-Thomas space. Edge dofs come first,
// (degree+1) per edge in moment order, then interior dofs. The scaled normal
// trace of edge dof (l,k) on edge l is the universal polynomial trace_poly[k]
// (independent of l), and is identically zero on the other edges.
struct RTRef {
  int nloc = 0;
  int per_edge = 0;
  int n_interior = 0;
  std::vector<std::array<Poly2, 2>> basis;  // reference components
  std::vector<Poly2> div;
  std::vector<Poly1> trace_poly;

  // Component mass tables: [0]=xx, [1]=yy, [2]=xy (entry (i,j) = integral of
  // component a of basis i times component b of basis j).
  std::array<std::vector<Rat>, 3> comp_mass;
  std::vector<Rat> div_div;

  std::array<std::vector<Interval>, 3> comp_mass_iv;
  std::vector<Interval> div_div_iv;
};

const RTRef& rt_ref(Space s);

// Exact coupling table: integral of div(rt basis i) * (dg basis j) over the
// reference triangle. Geometry independent.
const std::vector<Rat>& rt_div_dg_table(Space rt, Space dg);
// Exact scalar x dg product table on the reference triangle.
const std::vector<Rat>& scalar_dg_table(Space scalar, Space dg);

// Degree-of-freedom layout of a space over a mesh. Global ids follow a fixed
// convention: continuous spaces number vertices, then edge nodes (ascending
// global edge id, nodes ordered from the smaller to the larger vertex), then
// element bubbles; cr numbers edges; dg numbers element-locally; rt numbers
// (degree+1) dofs per edge then the element interior dofs.
struct DofMap {
  Space space = Space::cg1;
  int n_dofs = 0;
  int nloc = 0;
  std::vector<int> dofs;       // n_tris * nloc
  std::vector<double> scale;   // n_tris * nloc, orientation factor (+1/-1)
  std::vector<char> boundary;  // per dof: has support on the domain boundary
};

DofMap build_dofmap(const Mesh& mesh, Space space);

// Index map keeping only non-boundary dofs: -1 for dropped dofs, else the
// new contiguous index. Used for essential (Dirichlet) conditions.
std::vector<int> interior_map(const DofMap& dm);
int count_interior(const DofMap& dm);

// Compressed sparse row matrix over double or Interval entries.
template <typename T>
struct SparseMat {
  int rows = 0, cols = 0;
  std::vector<int> row_ptr;  // rows+1
  std::vector<int> col_idx;
  std::vector<T> val;

  static SparseMat from_triplets(int rows, int cols,
                                 std::vector<std::pair<std::pair<int, int>, T>>&& t);
  T at(int i, int j) const;  // zero when absent
  std::vector<T> to_dense() const;
  std::size_t nnz() const { return col_idx.size(); }
};

using SparseD = SparseMat<double>;
using SparseI = SparseMat<Interval>;

// Drop rows/columns mapped to -1 and renumber the rest.
template <typename T>
SparseMat<T> restrict_map(const SparseMat<T>& m, const std::vector<int>& row_map,
                          int new_rows, const std::vector<int>& col_map, int new_cols);

// Entrywise sum of two equal-shape sparse matrices.
template <typename T>
SparseMat<T> sparse_sum(const SparseMat<T>& x, const SparseMat<T>& y);

// Bilinear form assembly. The interval variants enclose the exact value of
// the form for the exact vertex coordinates (reference tables are exact
// rationals, geometry factors are enclosed in intervals).
SparseD assemble_grad_grad(const Mesh& mesh, const DofMap& dm);
SparseI assemble_grad_grad_iv(const Mesh& mesh, const DofMap& dm);
SparseD assemble_mass(const Mesh& mesh, const DofMap& dm);
SparseI assemble_mass_iv(const Mesh& mesh, const DofMap& dm);
SparseD assemble_boundary_mass(const Mesh& mesh, const DofMap& dm);
SparseI assemble_boundary_mass_iv(const Mesh& mesh, const DofMap& dm);
SparseD assemble_rt_mass(const Mesh& mesh, const DofMap& dm);
SparseI assemble_rt_mass_iv(const Mesh& mesh, const DofMap& dm);
SparseD assemble_div_div(const Mesh& mesh, const DofMap& dm);
SparseI assemble_div_div_iv(const Mesh& mesh, const DofMap& dm);
// Rows = rt dofs, cols = dg dofs, entry = integral of div(w_i) q_j.
SparseD assemble_rt_div_dg(const Mesh& mesh, const DofMap& rt, const DofMap& dg);
SparseI assemble_rt_div_dg_iv(const Mesh& mesh, const DofMap& rt, const DofMap& dg);
// Rows = scalar dofs, cols = dg dofs, entry = integral of phi_i q_j.
SparseD assemble_scalar_dg(const Mesh& mesh, const DofMap& sc, const DofMap& dg);
SparseI assemble_scalar_dg_iv(const Mesh& mesh, const DofMap& sc, const DofMap& dg);

// Floating-point evaluation of reference basis functions (tests, quadrature
// paths, solution post-processing).
double eval_scalar_basis(Space s, int k, double x, double y);
Vec2 eval_scalar_grad(Space s, int k, double x, double y);
Vec2 eval_rt_basis(Space s, int k, double x, double y);
double eval_rt_div(Space s, int k, double x, double y);

}  // namespace eigbound
