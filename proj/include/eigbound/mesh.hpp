#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace eigbound {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Mesh-size request for graded refinement: target element size
// h_max * min(1, (r/cutoff)^exponent) where r is the distance to the nearest
// corner point. An empty corner list requests the uniform size h_max.
struct SizeField {
  std::vector<Vec2> corners;
  double exponent = 1.0 / 3.0;
  double h_max = 0.0;
  double cutoff = 1.0;

  double size_at(Vec2 p) const;
};

// Conforming triangle mesh with positive-orientation elements and derived
// edge connectivity. Triangles are stored as vertex-index triples; local edge
// l of a triangle is the edge opposite local vertex l, i.e. between local
// vertices (l+1)%3 and (l+2)%3 in counterclockwise order.
class Mesh {
 public:
  struct Edge {
    int v0 = -1, v1 = -1;  // endpoint vertex ids, ascending (v0 < v1)
    int t0 = -1, t1 = -1;  // adjacent triangles; t1 = -1 on the boundary
    int marker = 0;        // nonzero on boundary edges
  };

  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> tris;

  // Derived by finalize():
  std::vector<Edge> edges;                       // sorted by (v0, v1)
  std::vector<std::array<int, 3>> tri_edges;     // global edge id of local edge l
  std::vector<std::array<bool, 3>> tri_edge_asc; // true if the CCW traversal of
                                                 // local edge l runs from the
                                                 // smaller to the larger vertex id
  std::vector<double> area;   // per triangle
  std::vector<double> h_k;    // longest edge per triangle
  std::vector<int> boundary_edge_of_tri;  // local index of the unique boundary
                                          // edge, -1 if none, -2 if several
  double h_max = 0.0;
  int n_boundary_edges = 0;

  // Orients all triangles positively, builds edge connectivity and caches,
  // and validates conformity (each edge shared by at most two triangles).
  // Throws std::runtime_error on degenerate or non-conforming input.
  void finalize();

  bool finalized() const { return !tri_edges.empty() || tris.empty(); }

  int n_vertices() const { return (int)vertices.size(); }
  int n_tris() const { return (int)tris.size(); }
  int n_edges() const { return (int)edges.size(); }

  double total_area() const;

  // True when every element touching the boundary has exactly one boundary
  // edge (required by the Steklov projection constant).
  bool steklov_compatible() const;

  // Height of a boundary element relative to its boundary edge:
  // H_K = 2 area(K) / |boundary edge|.
  double boundary_height(int tri) const;
};

enum class DomainKind { square, lshape, dumbbell };

// Uniform N x N grid on the unit square, each cell split by the same
// diagonal direction; 2 N^2 right triangles, h_max = sqrt(2)/N.
Mesh uniform_square(int n);

// Counterclockwise polygon outline of a template domain. The dumbbell is two
// unit squares [0,1]^2 and [2,3]x[0,1] joined by the bar
// [1,2] x [(1-w)/2, (1+w)/2].
std::vector<Vec2> template_domain(DomainKind kind, double bar_width = 0.40625);

// The re-entrant corner points of a template domain (empty for the square).
std::vector<Vec2> reentrant_corners(DomainKind kind, double bar_width = 0.40625);

double polygon_area(const std::vector<Vec2>& poly);

// Tensor-grid base triangulation of an axis-aligned rectilinear polygon.
// Grid lines pass through every polygon vertex coordinate and are subdivided
// so that each cell diagonal is at most h_cap. Throws if the polygon has a
// non-axis-aligned or degenerate edge.
Mesh triangulate_rectilinear(const std::vector<Vec2>& poly, double h_cap);

// Longest-edge bisection to a fixed point of the size predicate
// h_K <= field.size_at(centroid_K); conforming by construction.
Mesh refine_graded(const Mesh& mesh, const SizeField& field);

// Bisects boundary elements that own more than one boundary edge (across the
// edge opposite the offending corner vertex) until steklov_compatible holds.
Mesh steklov_fixup(const Mesh& mesh);

// Text format, bit-exact round-trip:
//   line 1: nv nt nb
//   nv lines: x y                 (17 significant digits)
//   nt lines: i j k               (0-based vertex ids)
//   nb lines: i j marker          (boundary edges)
void save_mesh_text(const Mesh& mesh, std::ostream& out);
Mesh load_mesh_text(std::istream& in);
void save_mesh_text(const Mesh& mesh, const std::string& path);
Mesh load_mesh_text(const std::string& path);

// Rectilinear polygon file: line 1 n, then n lines "x y" in CCW order.
std::vector<Vec2> load_polygon_text(std::istream& in);
std::vector<Vec2> load_polygon_text(const std::string& path);

}  // namespace eigbound
