#include "meshgnn/geomesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include <spdlog/spdlog.h>

#include "meshgnn/delaunay.hpp"
#include "meshgnn/error.hpp"
#include "meshgnn/rng.hpp"

namespace meshgnn {

// ---------------------------------------------------------------------------
// Curves

namespace {

Vec2 bezier(const std::array<Vec2, 4>& c, double t) {
  const double s = 1.0 - t;
  return s * s * s * c[0] + 3.0 * s * s * t * c[1] + 3.0 * s * t * t * c[2] + t * t * t * c[3];
}

std::vector<Vec2> open_polygon(const std::vector<Vec2>& closed) {
  std::vector<Vec2> poly(closed.begin(), closed.end());
  if (poly.size() > 1 && (poly.front() - poly.back()).norm() <= 1e-12) poly.pop_back();
  return poly;
}

std::uint64_t hash_points(std::span<const Vec2> pts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (const Vec2& p : pts) {
    for (int k = 0; k < 2; ++k) {
      std::uint64_t bits;
      const double v = p[k];
      std::memcpy(&bits, &v, sizeof bits);
      h = mix_seed(h, bits);
    }
  }
  return h;
}

}  // namespace

std::vector<Vec2> sample_curve(const ClosedCurve& curve, int samples_per_segment) {
  if (curve.segments.empty()) return curve.arc_samples;
  std::vector<Vec2> out;
  out.reserve(curve.segments.size() * samples_per_segment + 1);
  for (const auto& seg : curve.segments) {
    for (int k = 0; k < samples_per_segment; ++k) {
      out.push_back(bezier(seg, static_cast<double>(k) / samples_per_segment));
    }
  }
  out.push_back(out.front());
  return out;
}

ClosedCurve polygon_curve(std::span<const Vec2> polygon) {
  ClosedCurve c;
  c.control_points.assign(polygon.begin(), polygon.end());
  c.arc_samples.assign(polygon.begin(), polygon.end());
  if (c.arc_samples.empty() || (c.arc_samples.front() - c.arc_samples.back()).norm() > 1e-12) {
    c.arc_samples.push_back(c.arc_samples.front());
  }
  return c;
}

ClosedCurve scaled(const ClosedCurve& curve, double factor) {
  ClosedCurve out = curve;
  for (Vec2& p : out.control_points) p *= factor;
  for (auto& seg : out.segments)
    for (Vec2& p : seg) p *= factor;
  for (Vec2& p : out.arc_samples) p *= factor;
  return out;
}

ClosedCurve gen_geometry(std::uint64_t seed, int n_ctrl, Interval radius_range) {
  if (n_ctrl < 4) throw GenerationError("gen_geometry: n_ctrl must be >= 4");
  if (!(radius_range.lo > 0.0) || radius_range.hi < radius_range.lo) {
    throw GenerationError("gen_geometry: radius range must lie in (0, inf)");
  }
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(seed, attempt));
    std::vector<double> angles(n_ctrl);
    for (double& a : angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());

    ClosedCurve curve;
    curve.control_points.resize(n_ctrl);
    for (int i = 0; i < n_ctrl; ++i) {
      const double r = radius_range.hi > radius_range.lo
                           ? rng.uniform(radius_range.lo, radius_range.hi)
                           : radius_range.lo;
      curve.control_points[i] = r * Vec2(std::cos(angles[i]), std::sin(angles[i]));
    }
    // Catmull-Rom tangents; the inner handles on either side of a knot are
    // reflections of each other, which makes the composite curve C1.
    const auto& P = curve.control_points;
    std::vector<Vec2> tangent(n_ctrl);
    for (int i = 0; i < n_ctrl; ++i) {
      tangent[i] = 0.5 * (P[(i + 1) % n_ctrl] - P[(i + n_ctrl - 1) % n_ctrl]);
    }
    for (int i = 0; i < n_ctrl; ++i) {
      const int j = (i + 1) % n_ctrl;
      curve.segments.push_back({P[i], P[i] + tangent[i] / 3.0, P[j] - tangent[j] / 3.0, P[j]});
    }
    curve.arc_samples = sample_curve(curve, kDefaultSamplesPerSegment);
    const auto poly = open_polygon(curve.arc_samples);
    if (signed_area(poly) <= 0.0) continue;
    if (!polygon_is_simple(poly)) continue;
    return curve;
  }
  throw GenerationError("gen_geometry: rejection budget of 1000 attempts exhausted");
}

// ---------------------------------------------------------------------------
// Mesh

double Mesh::triangle_area(int t) const {
  const auto& v = triangles[t].v;
  return 0.5 * orient2d(nodes[v[0]], nodes[v[1]], nodes[v[2]]);
}

double Mesh::total_area() const {
  double acc = 0.0;
  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) acc += triangle_area(t);
  return acc;
}

std::vector<bool> Mesh::boundary_mask() const {
  std::vector<bool> mask(nodes.size(), false);
  for (int b : boundary_nodes) mask[b] = true;
  return mask;
}

std::vector<std::array<int, 2>> Mesh::unique_edges() const {
  std::set<std::array<int, 2>> edges;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t.v[k], b = t.v[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return {edges.begin(), edges.end()};
}

void validate(const Mesh& mesh) {
  const int n = mesh.node_count();
  if (mesh.triangles.empty()) throw MeshError("mesh has no triangles");
  std::vector<bool> used(n, false);
  std::map<std::pair<int, int>, int> directed;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& v = mesh.triangles[t].v;
    for (int k = 0; k < 3; ++k) {
      if (v[k] < 0 || v[k] >= n) throw MeshError("triangle references missing node");
      used[v[k]] = true;
    }
    if (!(mesh.triangle_area(t) > 0.0)) {
      throw MeshError("triangle " + std::to_string(t) + " has non-positive signed area");
    }
    for (int k = 0; k < 3; ++k) {
      if (++directed[{v[k], v[(k + 1) % 3]}] > 1) throw MeshError("edge shared by >2 triangles");
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!used[i]) throw MeshError("node " + std::to_string(i) + " belongs to no triangle");
  }
  // A directed edge without its reverse lies on the boundary.
  std::map<int, int> next;
  for (const auto& [e, count] : directed) {
    if (directed.count({e.second, e.first}) == 0) {
      if (next.count(e.first) != 0) throw MeshError("boundary is not a single simple cycle");
      next[e.first] = e.second;
    }
  }
  const auto& b = mesh.boundary_nodes;
  if (b.size() != next.size()) {
    throw MeshError("boundary_nodes does not cover the boundary edge cycle exactly once");
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto it = next.find(b[i]);
    if (it == next.end() || it->second != b[(i + 1) % b.size()]) {
      throw MeshError("boundary_nodes does not follow the boundary edge cycle");
    }
  }
}

namespace {

std::vector<Vec2> resample(const std::vector<Vec2>& poly, int m) {
  const int n = static_cast<int>(poly.size());
  std::vector<double> cum(n + 1, 0.0);
  for (int i = 0; i < n; ++i) cum[i + 1] = cum[i] + (poly[(i + 1) % n] - poly[i]).norm();
  const double total = cum[n];
  std::vector<Vec2> out;
  out.reserve(m);
  int seg = 0;
  for (int k = 0; k < m; ++k) {
    const double s = total * k / m;
    while (seg < n - 1 && cum[seg + 1] <= s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? (s - cum[seg]) / len : 0.0;
    out.push_back(poly[seg] + t * (poly[(seg + 1) % n] - poly[seg]));
  }
  return out;
}

}  // namespace

Mesh triangulate(const ClosedCurve& curve, double h) {
  if (!(h > 0.0)) throw MeshError("triangulate: h must be positive");
  const auto poly = open_polygon(curve.arc_samples);
  if (poly.size() < 3) throw MeshError("triangulate: curve has fewer than 3 vertices");
  const double perimeter = polygon_perimeter(poly);
  const int m = static_cast<int>(std::lround(perimeter / h));
  if (m < 3) throw MeshError("triangulate: fewer than 3 boundary samples at this h");

  std::vector<Vec2> boundary = resample(poly, m);
  if (signed_area(boundary) <= 0.0 || !polygon_is_simple(boundary)) {
    throw MeshError("triangulate: resampled boundary is not a simple CCW polygon");
  }

  Vec2 lo = boundary[0], hi = boundary[0];
  for (const Vec2& p : boundary) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Rng rng(hash_points(curve.arc_samples) ^ std::hash<double>{}(h));
  std::vector<Vec2> interior;
  const int nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / h)) + 1;
  const int ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / h)) + 1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      Vec2 p(lo.x() + i * h, lo.y() + j * h);
      p += Vec2(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)) * h;
      if (!point_in_polygon(p, boundary)) continue;
      if (distance_to_polygon(p, boundary) < 0.55 * h) continue;
      interior.push_back(p);
    }
  }

  // Conforming Delaunay: split any boundary segment missing from the
  // triangulation at its midpoint and retriangulate.
  std::vector<Triangle> tris;
  constexpr int kMaxRecoveryRounds = 12;
  bool conforming = false;
  for (int round = 0; round < kMaxRecoveryRounds && !conforming; ++round) {
    std::vector<Vec2> pts = boundary;
    pts.insert(pts.end(), interior.begin(), interior.end());
    tris = delaunay_triangulate(pts);
    std::set<std::pair<int, int>> edges;
    for (const auto& t : tris) {
      for (int k = 0; k < 3; ++k) {
        const int a = t.v[k], b = t.v[(k + 1) % 3];
        edges.insert({std::min(a, b), std::max(a, b)});
      }
    }
    const int nb = static_cast<int>(boundary.size());
    std::vector<Vec2> refined;
    refined.reserve(2 * nb);
    conforming = true;
    for (int i = 0; i < nb; ++i) {
      const int j = (i + 1) % nb;
      refined.push_back(boundary[i]);
      if (edges.count({std::min(i, j), std::max(i, j)}) == 0) {
        refined.push_back(0.5 * (boundary[i] + boundary[j]));
        conforming = false;
      }
    }
    if (!conforming) {
      boundary = std::move(refined);
      std::erase_if(interior, [&](const Vec2& p) {
        return distance_to_polygon(p, boundary) < 0.35 * h;
      });
    }
  }
  if (!conforming) throw MeshError("triangulate: boundary recovery did not converge");

  Mesh mesh;
  mesh.char_length = h;
  mesh.nodes = boundary;
  mesh.nodes.insert(mesh.nodes.end(), interior.begin(), interior.end());
  for (const auto& t : tris) {
    const Vec2 c = (mesh.nodes[t.v[0]] + mesh.nodes[t.v[1]] + mesh.nodes[t.v[2]]) / 3.0;
    if (point_in_polygon(c, boundary)) mesh.triangles.push_back(t);
  }
  if (mesh.triangles.empty()) throw MeshError("triangulate: empty interior after clipping");

  // Drop points that ended up outside every kept triangle.
  std::vector<int> remap(mesh.nodes.size(), -1);
  for (const auto& t : mesh.triangles)
    for (int v : t.v) remap[v] = 0;
  const int nb = static_cast<int>(boundary.size());
  for (int i = 0; i < nb; ++i) {
    if (remap[i] < 0) throw MeshError("triangulate: boundary node lost during clipping");
  }
  std::vector<Vec2> kept;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    if (remap[i] == 0) {
      remap[i] = static_cast<int>(kept.size());
      kept.push_back(mesh.nodes[i]);
    }
  }
  mesh.nodes = std::move(kept);
  for (auto& t : mesh.triangles)
    for (int& v : t.v) v = remap[v];
  mesh.boundary_nodes.resize(nb);
  for (int i = 0; i < nb; ++i) mesh.boundary_nodes[i] = i;
  validate(mesh);
  return mesh;
}

// ---------------------------------------------------------------------------
// Boundary conditions

const char* to_string(BcKind kind) {
  switch (kind) {
    case BcKind::interior: return "interior";
    case BcKind::dirichlet_hom: return "dirichlet_hom";
    case BcKind::dirichlet_nonhom: return "dirichlet_nonhom";
    case BcKind::neumann: return "neumann";
  }
  return "interior";
}

BcKind bc_kind_from_string(const std::string& s) {
  if (s == "interior") return BcKind::interior;
  if (s == "dirichlet_hom") return BcKind::dirichlet_hom;
  if (s == "dirichlet_nonhom") return BcKind::dirichlet_nonhom;
  if (s == "neumann") return BcKind::neumann;
  throw ConfigError("unknown boundary condition kind '" + s + "'");
}

void validate(const BoundarySpec& bcs, const Mesh& mesh) {
  if (static_cast<int>(bcs.node_bc.size()) != mesh.node_count()) {
    throw BoundaryError("boundary spec size differs from node count");
  }
  const auto on_boundary = mesh.boundary_mask();
  for (int i = 0; i < mesh.node_count(); ++i) {
    const NodeBc& bc = bcs.node_bc[i];
    if (!on_boundary[i] && (bc.kind != BcKind::interior || bc.vector != Vec2::Zero() || bc.magnitude != 0.0)) {
      throw BoundaryError("interior node " + std::to_string(i) + " carries a boundary condition");
    }
    if (bc.magnitude < 0.0 || std::abs(bc.magnitude - bc.vector.norm()) > 1e-15 * (1.0 + bc.magnitude)) {
      throw BoundaryError("node " + std::to_string(i) + " magnitude differs from |vector|");
    }
    if (bc.kind == BcKind::dirichlet_hom && bc.vector != Vec2::Zero()) {
      throw BoundaryError("homogeneous Dirichlet node with nonzero vector");
    }
  }
  // At least one run of >= 2 consecutive Dirichlet boundary nodes.
  const auto& b = mesh.boundary_nodes;
  const int nb = static_cast<int>(b.size());
  bool anchored = false;
  for (int i = 0; i < nb && !anchored; ++i) {
    anchored = is_dirichlet(bcs.node_bc[b[i]].kind) && is_dirichlet(bcs.node_bc[b[(i + 1) % nb]].kind);
  }
  if (!anchored) throw BoundaryError("no Dirichlet arc of >= 2 nodes; rigid-body modes unconstrained");
  if (bcs.body_force && !(bcs.body_force->radius > 0.0)) {
    throw BoundaryError("body force radius must be positive");
  }
}

BoundarySpec assign_bcs(const Mesh& mesh, std::uint64_t seed, const BcSampling& s) {
  const auto& b = mesh.boundary_nodes;
  const int nb = static_cast<int>(b.size());
  Rng rng(seed);

  const int n_arcs = s.dirichlet_arcs + s.neumann_arcs;
  if (s.dirichlet_arcs < 1 || s.neumann_arcs < 0) throw BoundaryError("need at least one Dirichlet arc");
  const double f_d = rng.uniform(s.arc_fraction.lo, s.arc_fraction.hi);
  const double f_n = rng.uniform(s.arc_fraction.lo, s.arc_fraction.hi);
  const auto arc_len = [&](double f, int arcs) {
    return std::max(2, static_cast<int>(std::lround(f * nb / arcs)));
  };
  const int len_d = arc_len(f_d, s.dirichlet_arcs);
  const int len_n = s.neumann_arcs > 0 ? arc_len(f_n, s.neumann_arcs) : 0;

  // Arcs alternate D, N, D, N, ... around the boundary; each is followed by a
  // mandatory one-node gap so runs of the same kind never merge.
  std::vector<BcKind> order;
  for (int k = 0; k < std::max(s.dirichlet_arcs, s.neumann_arcs); ++k) {
    if (k < s.dirichlet_arcs) order.push_back(BcKind::dirichlet_hom);
    if (k < s.neumann_arcs) order.push_back(BcKind::neumann);
  }
  const int used = s.dirichlet_arcs * len_d + s.neumann_arcs * len_n + n_arcs;
  if (used > nb) {
    throw BoundaryError("boundary of " + std::to_string(nb) + " nodes too short for disjoint arcs");
  }
  std::vector<int> extra_gap(n_arcs, 0);
  for (int k = 0; k < nb - used; ++k) ++extra_gap[rng.index(n_arcs)];
  int cursor = static_cast<int>(rng.index(nb));

  BoundarySpec spec;
  spec.node_bc.assign(mesh.node_count(), NodeBc{});
  const auto random_direction = [&](double magnitude) {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return Vec2(magnitude * std::cos(a), magnitude * std::sin(a));
  };
  for (int k = 0; k < n_arcs; ++k) {
    NodeBc bc;
    int len;
    if (order[k] == BcKind::neumann) {
      bc.kind = BcKind::neumann;
      bc.vector = random_direction(rng.uniform(s.traction_magnitude.lo, s.traction_magnitude.hi));
      len = len_n;
    } else if (rng.bernoulli(s.homogeneous_probability)) {
      bc.kind = BcKind::dirichlet_hom;
      len = len_d;
    } else {
      bc.kind = BcKind::dirichlet_nonhom;
      bc.vector = random_direction(rng.uniform(s.dirichlet_magnitude.lo, s.dirichlet_magnitude.hi));
      len = len_d;
    }
    bc.magnitude = bc.vector.norm();
    for (int i = 0; i < len; ++i) spec.node_bc[b[(cursor + i) % nb]] = bc;
    cursor = (cursor + len + 1 + extra_gap[k]) % nb;
  }

  if (rng.bernoulli(s.body_force_probability)) {
    const auto on_boundary = mesh.boundary_mask();
    std::vector<int> interior;
    for (int i = 0; i < mesh.node_count(); ++i)
      if (!on_boundary[i]) interior.push_back(i);
    if (!interior.empty()) {
      BodyForce f;
      f.center = mesh.nodes[interior[rng.index(interior.size())]];
      f.radius = s.body_force_radius * mesh.char_length;
      f.density = random_direction(rng.uniform(s.body_force_magnitude.lo, s.body_force_magnitude.hi));
      spec.body_force = f;
    }
  }
  validate(spec, mesh);
  return spec;
}

Mesh jitter_nodes(const Mesh& mesh, double sigma, std::uint64_t seed) {
  Mesh out = mesh;
  if (sigma <= 0.0) return out;
  std::vector<std::vector<int>> incident(mesh.nodes.size());
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
    for (int v : mesh.triangles[t].v) incident[v].push_back(t);
  const auto on_boundary = mesh.boundary_mask();
  Rng rng(seed);
  int rejected = 0;
  for (int i = 0; i < mesh.node_count(); ++i) {
    if (on_boundary[i]) continue;
    const Vec2 old = out.nodes[i];
    const double dx = rng.normal(0.0, sigma);
    const double dy = rng.normal(0.0, sigma);
    out.nodes[i] = old + Vec2(dx, dy);
    const bool flips = std::any_of(incident[i].begin(), incident[i].end(),
                                   [&](int t) { return !(out.triangle_area(t) > 0.0); });
    if (flips) {
      out.nodes[i] = old;
      ++rejected;
    }
  }
  if (rejected > 0) spdlog::debug("jitter_nodes: rejected {} node moves", rejected);
  return out;
}

void Material::validate() const {
  if (!(youngs_modulus > 0.0)) throw ConfigError("material: Young's modulus must be positive");
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) {
    throw ConfigError("material: Poisson ratio must lie in [0, 0.5)");
  }
}

}  // namespace meshgnn
