#pragma once

#include <vector>

#include "eigbound/mesh.hpp"

namespace eigbound {

// Quadrature rule on the reference triangle; weights sum to the reference
// area 1/2. Exact for polynomials up to the requested total degree.
struct TriQuad {
  std::vector<Vec2> pts;
  std::vector<double> wts;
};

TriQuad tri_quadrature(int degree);

// Gauss-Legendre rule on [0, 1]; n points integrate degree 2n-1 exactly.
struct EdgeQuad {
  std::vector<double> t;
  std::vector<double> w;
};

EdgeQuad edge_quadrature(int npts);

}  // namespace eigbound
