#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meshgnn/geometry.hpp"

namespace meshgnn {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Closed composite cubic Bezier curve. Segment i runs from control_points[i]
// to control_points[i + 1] (cyclically) and is stored as its four Bezier
// control points. arc_samples is the closed polyline approximation with
// arc_samples.front() == arc_samples.back().
struct ClosedCurve {
  std::vector<Vec2> control_points;
  std::vector<std::array<Vec2, 4>> segments;
  std::vector<Vec2> arc_samples;
};

inline constexpr int kDefaultSamplesPerSegment = 48;

// Samples a curve's Bezier segments into a closed polyline.
std::vector<Vec2> sample_curve(const ClosedCurve& curve, int samples_per_segment);

// Wraps an existing CCW simple polygon as a curve without Bezier segments.
ClosedCurve polygon_curve(std::span<const Vec2> polygon);

// Uniformly scales a curve about the origin.
ClosedCurve scaled(const ClosedCurve& curve, double factor);

// Random simple closed curve through n_ctrl knots placed at sorted random
// angles with radii drawn from `radius_range`, centred on the origin. Throws
// GenerationError after 1000 rejected attempts.
ClosedCurve gen_geometry(std::uint64_t seed, int n_ctrl, Interval radius_range);

struct Triangle {
  std::array<int, 3> v;
};

// Planar triangulation. Triangles are counter-clockwise; boundary_nodes walks
// the single boundary cycle counter-clockwise.
struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<Triangle> triangles;
  std::vector<int> boundary_nodes;
  double char_length = 0.0;

  int node_count() const { return static_cast<int>(nodes.size()); }
  double triangle_area(int t) const;
  double total_area() const;
  std::vector<bool> boundary_mask() const;
  // Unique undirected edges (i < j), sorted.
  std::vector<std::array<int, 2>> unique_edges() const;
};

// Throws MeshError naming the first violated invariant.
void validate(const Mesh& mesh);

// Delaunay mesh: boundary resampled at spacing ~h, interior seeded on a
// jittered grid of spacing h, triangles with centroid outside removed. The
// interior jitter is seeded from the curve itself so the result is a pure
// function of (curve, h).
Mesh triangulate(const ClosedCurve& curve, double h);

enum class BcKind : std::uint8_t { interior, dirichlet_hom, dirichlet_nonhom, neumann };

const char* to_string(BcKind kind);
BcKind bc_kind_from_string(const std::string& s);

struct NodeBc {
  BcKind kind = BcKind::interior;
  Vec2 vector = Vec2::Zero();
  double magnitude = 0.0;
};

struct BodyForce {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  Vec2 density = Vec2::Zero();

  bool contains(const Vec2& p) const { return (p - center).norm() <= radius; }
};

struct BoundarySpec {
  std::vector<NodeBc> node_bc;
  std::optional<BodyForce> body_force;
};

// Throws BoundaryError if `bcs` violates its invariants for `mesh`.
void validate(const BoundarySpec& bcs, const Mesh& mesh);

struct Material {
  double youngs_modulus = 100.0;
  double poisson_ratio = 0.3;

  void validate() const;
};

struct BcSampling {
  int dirichlet_arcs = 1;
  int neumann_arcs = 1;
  // Fraction of boundary nodes covered by all arcs of one kind together.
  Interval arc_fraction{0.10, 0.30};
  double homogeneous_probability = 0.5;
  Interval dirichlet_magnitude{0.01, 0.05};
  Interval traction_magnitude{0.5, 2.0};
  double body_force_probability = 0.5;
  Interval body_force_magnitude{0.1, 0.5};
  // Body-force disk radius in units of mesh.char_length.
  double body_force_radius = 2.0;
};

BoundarySpec assign_bcs(const Mesh& mesh, std::uint64_t seed, const BcSampling& sampling = {});

// Gaussian perturbation of interior nodes; a node's move is dropped when it
// would invert an incident triangle. Boundary nodes never move.
Mesh jitter_nodes(const Mesh& mesh, double sigma, std::uint64_t seed);

// Number of maximal runs of consecutive boundary nodes (cyclically) whose
// kind satisfies `pred`.
template <typename Pred>
int count_boundary_runs(const Mesh& mesh, const BoundarySpec& bcs, Pred pred) {
  const auto& b = mesh.boundary_nodes;
  const int nb = static_cast<int>(b.size());
  int runs = 0;
  for (int i = 0; i < nb; ++i) {
    const bool cur = pred(bcs.node_bc[b[i]].kind);
    const bool prev = pred(bcs.node_bc[b[(i + nb - 1) % nb]].kind);
    if (cur && !prev) ++runs;
  }
  if (runs == 0 && nb > 0 && pred(bcs.node_bc[b[0]].kind)) runs = 1;
  return runs;
}

inline bool is_dirichlet(BcKind k) {
  return k == BcKind::dirichlet_hom || k == BcKind::dirichlet_nonhom;
}

}  // namespace meshgnn
