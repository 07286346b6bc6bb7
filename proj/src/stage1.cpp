#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#include "eigbound/fem.hpp"
#include "eigbound/stage1.hpp"

namespace eigbound {

namespace {

Interval edge_length_iv(const Mesh& m, int v0, int v1) {
  Interval dx = Interval(m.vertices[v1].x) - Interval(m.vertices[v0].x);
  Interval dy = Interval(m.vertices[v1].y) - Interval(m.vertices[v0].y);
  return isqrt(isqr(dx) + isqr(dy));
}

Interval hmax_iv(const Mesh& m) {
  double lo = 0.0, hi = 0.0;
  for (const Mesh::Edge& e : m.edges) {
    Interval le = edge_length_iv(m, e.v0, e.v1);
    lo = std::max(lo, le.lo);
    hi = std::max(hi, le.hi);
  }
  return Interval(lo, hi);
}

EncloseOptions lower_only(const Stage1Options& opt) {
  EncloseOptions eo;
  eo.rel_width = opt.rel_width;
  eo.max_probes = opt.max_probes;
  eo.need_upper = false;
  return eo;
}

}  // namespace

Interval ch_laplacian(const Mesh& mesh) {
  if (!mesh.finalized() || mesh.n_tris() == 0)
    throw std::invalid_argument("ch_laplacian needs a finalized nonempty mesh");
  return Interval::around(0.1893) * hmax_iv(mesh);
}

Interval ch_steklov(const Mesh& mesh, double lambda1h_lower) {
  if (!mesh.finalized() || mesh.n_tris() == 0)
    throw std::invalid_argument("ch_steklov needs a finalized nonempty mesh");
  if (!mesh.steklov_compatible())
    throw std::runtime_error(
        "steklov projection constant needs one boundary edge per element");
  if (!(lambda1h_lower > 0.0))
    throw std::invalid_argument("lambda1h lower bound must be positive");
  double tlo = 0.0, thi = 0.0;
  for (int t = 0; t < mesh.n_tris(); ++t) {
    int l = mesh.boundary_edge_of_tri[t];
    if (l < 0) continue;
    const std::array<int, 3>& tv = mesh.tris[t];
    Interval hk(0.0);
    for (int e = 0; e < 3; ++e) {
      Interval le = edge_length_iv(mesh, tv[(e + 1) % 3], tv[(e + 2) % 3]);
      hk = Interval(std::max(hk.lo, le.lo), std::max(hk.hi, le.hi));
    }
    Vec2 a = mesh.vertices[tv[0]];
    Vec2 b = mesh.vertices[tv[1]];
    Vec2 c = mesh.vertices[tv[2]];
    Interval twice_area =
        (Interval(b.x) - Interval(a.x)) * (Interval(c.y) - Interval(a.y)) -
        (Interval(b.y) - Interval(a.y)) * (Interval(c.x) - Interval(a.x));
    Interval be = edge_length_iv(mesh, tv[(l + 1) % 3], tv[(l + 2) % 3]);
    Interval height = twice_area / be;
    if (!(height.lo > 0.0))
      throw std::runtime_error("degenerate boundary element");
    Interval term = hk / isqrt(height);
    tlo = std::max(tlo, term.lo);
    thi = std::max(thi, term.hi);
  }
  Interval trace_term = Interval::around(0.6711) * Interval(tlo, thi);
  Interval bulk_term =
      (Interval::around(0.1893) / isqrt(Interval(lambda1h_lower))) *
      hmax_iv(mesh);
  return trace_term + bulk_term;
}

Interval cr_lower_bound(double lambda_h_lower, const Interval& ch) {
  if (!(lambda_h_lower > 0.0)) return Interval(0.0);
  Interval lam(lambda_h_lower);
  Interval den = Interval(1.0) + isqr(ch) * lam;
  if (!(den.lo > 0.0)) return Interval(0.0);
  Interval r = lam / den;
  if (r.lo < 0.0) r.lo = 0.0;
  return r;
}

Stage1Result stage1_laplacian(const Mesh& mesh, const Stage1Options& opt) {
  if (opt.k < 1) throw std::invalid_argument("stage1 needs k >= 1");
  DofMap dm = build_dofmap(mesh, Space::cr);
  std::vector<int> imap = interior_map(dm);
  int ni = count_interior(dm);
  if (opt.k > ni) throw std::invalid_argument("stage1 k exceeds the dof count");
  SparseD ad = restrict_map(assemble_grad_grad(mesh, dm), imap, ni, imap, ni);
  SparseD bd = restrict_map(assemble_mass(mesh, dm), imap, ni, imap, ni);
  EigResult ev = lowest_pairs(ad, bd, opt.k, opt.eig);
  SparseI ai =
      restrict_map(assemble_grad_grad_iv(mesh, dm), imap, ni, imap, ni);
  SparseI bi = restrict_map(assemble_mass_iv(mesh, dm), imap, ni, imap, ni);
  std::vector<Interval> enc = pencil_enclosure(ai, bi, ev.values, lower_only(opt));

  Stage1Result res;
  res.ch = ch_laplacian(mesh);
  res.lambda_h = ev.values;
  res.lambda_h_lo.reserve(enc.size());
  for (const Interval& e : enc) res.lambda_h_lo.push_back(e.lo);
  res.lower.reserve(enc.size());
  for (double lo : res.lambda_h_lo)
    res.lower.push_back(cr_lower_bound(lo, res.ch).lo);
  return res;
}

Stage1Result stage1_steklov(const Mesh& mesh, const Stage1Options& opt) {
  if (opt.k < 1) throw std::invalid_argument("stage1 needs k >= 1");
  Mesh fixed;
  const Mesh* mp = &mesh;
  if (!mesh.steklov_compatible()) {
    fixed = steklov_fixup(mesh);
    mp = &fixed;
  }
  const Mesh& m = *mp;
  DofMap dm = build_dofmap(m, Space::cr);
  SparseD ad = sparse_sum(assemble_grad_grad(m, dm), assemble_mass(m, dm));
  SparseD bd = assemble_boundary_mass(m, dm);
  EigResult ev = lowest_pairs_singular_b(ad, bd, opt.k, m, dm, opt.eig);
  if ((int)ev.values.size() < opt.k)
    throw std::runtime_error("stage1 k exceeds the boundary rank");
  SparseI ai =
      sparse_sum(assemble_grad_grad_iv(m, dm), assemble_mass_iv(m, dm));
  SparseI bi = assemble_boundary_mass_iv(m, dm);
  std::vector<Interval> enc = pencil_enclosure(ai, bi, ev.values, lower_only(opt));

  Stage1Result res;
  res.ch = ch_steklov(m, enc[0].lo);
  res.lambda_h = ev.values;
  res.lambda_h_lo.reserve(enc.size());
  for (const Interval& e : enc) res.lambda_h_lo.push_back(e.lo);
  res.lower.reserve(enc.size());
  for (double lo : res.lambda_h_lo)
    res.lower.push_back(cr_lower_bound(lo, res.ch).lo);
  return res;
}

}  // namespace eigbound
