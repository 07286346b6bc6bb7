#include <cmath>
#include <stdexcept>

#include "eigbound/quadrature.hpp"

namespace eigbound {

namespace {

// Gauss-Legendre nodes/weights on [-1, 1], computed by Newton iteration on
// the Legendre recurrence (no typed-in tables).
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      // p0 = P_n(z); derivative from the standard identity.
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / pp;
      z -= dz;
      if (std::fabs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace

EdgeQuad edge_quadrature(int npts) {
  if (npts < 1) throw std::invalid_argument("edge_quadrature needs at least one point");
  std::vector<double> x, w;
  gauss_legendre(npts, x, w);
  EdgeQuad q;
  q.t.resize(npts);
  q.w.resize(npts);
  for (int i = 0; i < npts; ++i) {
    q.t[i] = 0.5 * (x[i] + 1.0);
    q.w[i] = 0.5 * w[i];
  }
  return q;
}

TriQuad tri_quadrature(int degree) {
  TriQuad q;
  if (degree <= 1) {
    q.pts = {{1.0 / 3, 1.0 / 3}};
    q.wts = {0.5};
    return q;
  }
  if (degree == 2) {
    q.pts = {{1.0 / 6, 1.0 / 6}, {2.0 / 3, 1.0 / 6}, {1.0 / 6, 2.0 / 3}};
    q.wts = {1.0 / 6, 1.0 / 6, 1.0 / 6};
    return q;
  }
  // Collapsed tensor Gauss rule via the substitution x = u, y = v(1-u),
  // dx dy = (1-u) du dv. The u-direction picks up one extra polynomial
  // degree from the Jacobian factor.
  int mu = (degree + 2) / 2 + 1;  // 2*mu - 1 >= degree + 1
  int mv = (degree + 1) / 2 + 1;  // 2*mv - 1 >= degree
  EdgeQuad qu = edge_quadrature(mu);
  EdgeQuad qv = edge_quadrature(mv);
  for (int i = 0; i < mu; ++i) {
    for (int j = 0; j < mv; ++j) {
      double u = qu.t[i], v = qv.t[j];
      q.pts.push_back({u, v * (1.0 - u)});
      q.wts.push_back(qu.w[i] * qv.w[j] * (1.0 - u));
    }
  }
  return q;
}

}  // namespace eigbound
