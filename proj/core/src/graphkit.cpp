#include "meshgnn/graphkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include "meshgnn/error.hpp"
#include "meshgnn/rng.hpp"

namespace meshgnn {

namespace {

std::uint64_t pair_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

void set_edge_features(Tensor& feat, Eigen::Index row, const Tensor& node_feat, const Edge& e, double flag) {
  const double dx = node_feat(e.dst, nf::x) - node_feat(e.src, nf::x);
  const double dy = node_feat(e.dst, nf::y) - node_feat(e.src, nf::y);
  feat(row, ef::distance) = std::hypot(dx, dy);
  feat(row, ef::dx) = dx;
  feat(row, ef::dy) = dy;
  feat(row, ef::augmented) = flag;
}

}  // namespace

std::vector<int> Graph::sources() const {
  std::vector<int> s(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) s[i] = edges[i].src;
  return s;
}

std::vector<int> Graph::destinations() const {
  std::vector<int> d(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) d[i] = edges[i].dst;
  return d;
}

void validate(const Graph& g) {
  if (g.node_feat.rows() != g.n_nodes || g.node_feat.cols() != kNodeFeatures)
    throw ShapeError("node features must be " + std::to_string(g.n_nodes) + "x" + std::to_string(kNodeFeatures));
  if (g.edge_feat.rows() != g.edge_count() || g.edge_feat.cols() != kEdgeFeatures)
    throw ShapeError("edge features must be " + std::to_string(g.edge_count()) + "x" + std::to_string(kEdgeFeatures));
  std::set<Edge> seen;
  for (const Edge& e : g.edges) {
    if (e.src < 0 || e.dst < 0 || e.src >= g.n_nodes || e.dst >= g.n_nodes)
      throw ShapeError("edge endpoint out of range");
    if (e.src == e.dst) throw ShapeError("self-loop at node " + std::to_string(e.src));
    if (!seen.insert(e).second)
      throw ShapeError("duplicate edge " + std::to_string(e.src) + "->" + std::to_string(e.dst));
  }
  for (const Edge& e : g.edges)
    if (!seen.count(Edge{e.dst, e.src}))
      throw ShapeError("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) + " has no reverse");
  if (g.displacement.size() != 0 && (g.displacement.rows() != g.n_nodes || g.displacement.cols() != 2))
    throw ShapeError("displacement target has the wrong shape");
  if (g.stress.size() != 0 && (g.stress.rows() != g.n_nodes || g.stress.cols() != 3))
    throw ShapeError("stress target has the wrong shape");
}

Graph mesh_to_graph(const Mesh& mesh, const BoundarySpec& bcs, const FemSolution& solution,
                    const FrameTransform& transform) {
  const int n = mesh.node_count();
  if (static_cast<int>(bcs.node_bc.size()) != n)
    throw ShapeError("boundary spec has " + std::to_string(bcs.node_bc.size()) + " records for " +
                     std::to_string(n) + " nodes");
  const bool has_solution = !solution.displacement.empty() || !solution.stress.empty();
  if (has_solution && (static_cast<int>(solution.displacement.size()) != n ||
                       static_cast<int>(solution.stress.size()) != n))
    throw ShapeError("solution size does not match node count");

  Graph g;
  g.n_nodes = n;
  g.node_feat = Tensor::Zero(n, kNodeFeatures);
  const std::vector<bool> on_boundary = mesh.boundary_mask();
  Vec2 force = Vec2::Zero();
  if (bcs.body_force) force = map_vector(transform, bcs.body_force->density);
  for (int i = 0; i < n; ++i) {
    auto row = g.node_feat.row(i);
    const Vec2 p = transform.to_local(mesh.nodes[i]);
    row(nf::x) = p.x();
    row(nf::y) = p.y();
    row(on_boundary[i] ? nf::boundary : nf::interior) = 1.0;
    const NodeBc& bc = bcs.node_bc[i];
    switch (bc.kind) {
      case BcKind::interior: break;
      case BcKind::dirichlet_hom: row(nf::dirichlet_hom) = 1.0; break;
      case BcKind::dirichlet_nonhom: row(nf::dirichlet_nonhom) = 1.0; break;
      case BcKind::neumann: row(nf::neumann) = 1.0; break;
    }
    if (bc.kind != BcKind::interior) {
      const Vec2 v = map_vector(transform, bc.vector);
      row(nf::bc_x) = v.x();
      row(nf::bc_y) = v.y();
      row(nf::bc_magnitude) = v.norm();
    }
    if (bcs.body_force && bcs.body_force->contains(mesh.nodes[i])) {
      row(nf::body_force) = 1.0;
      row(nf::f_x) = force.x();
      row(nf::f_y) = force.y();
      row(nf::f_magnitude) = force.norm();
    }
  }

  for (const auto& e : mesh.unique_edges()) {
    g.edges.push_back({e[0], e[1]});
    g.edges.push_back({e[1], e[0]});
  }
  g.edge_feat = Tensor::Zero(g.edge_count(), kEdgeFeatures);
  for (int k = 0; k < g.edge_count(); ++k) set_edge_features(g.edge_feat, k, g.node_feat, g.edges[k], 0.0);

  if (has_solution) {
    g.displacement.resize(n, 2);
    g.stress.resize(n, 3);
    for (int i = 0; i < n; ++i) {
      g.displacement.row(i) = map_vector(transform, solution.displacement[i]).transpose();
      g.stress.row(i) = map_stress(transform, solution.stress[i]).transpose();
    }
  }
  return g;
}

Graph augment_edges(const Graph& graph, double a_perc, std::uint64_t seed) {
  if (!(a_perc >= 0.0 && a_perc <= 1.0)) throw ConfigError("a_perc must lie in [0, 1]");
  std::unordered_set<std::uint64_t> existing;
  for (const Edge& e : graph.edges) existing.insert(pair_key(e.src, e.dst));
  const long undirected = static_cast<long>(existing.size());
  const long m = std::lround(a_perc * static_cast<double>(undirected));
  if (m == 0) return graph;
  const long n = graph.n_nodes;
  const long free_pairs = n * (n - 1) / 2 - undirected;
  if (free_pairs < m)
    throw ConfigError("graph too dense to add " + std::to_string(m) + " edges (" + std::to_string(free_pairs) +
                      " free pairs)");

  Rng rng(seed);
  std::vector<Edge> added;
  added.reserve(m);
  if (free_pairs <= 4 * m) {
    std::vector<Edge> pool;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (!existing.count(pair_key(i, j))) pool.push_back({i, j});
    for (long k = 0; k < m; ++k) {
      std::size_t pick = k + rng.index(pool.size() - k);
      std::swap(pool[k], pool[pick]);
      added.push_back(pool[k]);
    }
  } else {
    while (static_cast<long>(added.size()) < m) {
      const int i = static_cast<int>(rng.index(n));
      const int j = static_cast<int>(rng.index(n));
      if (i == j || !existing.insert(pair_key(i, j)).second) continue;
      added.push_back({i, j});
    }
  }

  Graph out = graph;
  const Eigen::Index base = graph.edge_count();
  out.edge_feat.conservativeResize(base + 2 * m, kEdgeFeatures);
  for (long k = 0; k < m; ++k) {
    const Edge fwd = added[k];
    const Edge rev{fwd.dst, fwd.src};
    out.edges.push_back(fwd);
    out.edges.push_back(rev);
    set_edge_features(out.edge_feat, base + 2 * k, out.node_feat, fwd, 1.0);
    set_edge_features(out.edge_feat, base + 2 * k + 1, out.node_feat, rev, 1.0);
  }
  return out;
}

EdgeList graph_power(const EdgeList& edges, int n_nodes, int l) {
  if (l < 1) throw ConfigError("graph power order must be >= 1");
  std::vector<std::vector<int>> adj(n_nodes);
  for (const Edge& e : edges) adj[e.src].push_back(e.dst);
  EdgeList out;
  std::vector<int> depth(n_nodes, -1);
  std::vector<int> frontier, next, touched;
  for (int s = 0; s < n_nodes; ++s) {
    touched.assign(1, s);
    depth[s] = 0;
    frontier.assign(1, s);
    for (int d = 1; d <= l && !frontier.empty(); ++d) {
      next.clear();
      for (int u : frontier)
        for (int v : adj[u])
          if (depth[v] < 0) {
            depth[v] = d;
            next.push_back(v);
            touched.push_back(v);
          }
      frontier.swap(next);
    }
    std::vector<int> reached(touched.begin() + 1, touched.end());
    std::sort(reached.begin(), reached.end());
    for (int v : reached) out.push_back({s, v});
    for (int v : touched) depth[v] = -1;
  }
  return out;
}

EdgeList induced_subgraph(const EdgeList& edges, int n_nodes, std::span<const int> kept) {
  std::vector<int> position(n_nodes, -1);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (kept[k] < 0 || kept[k] >= n_nodes) throw ShapeError("kept index out of range");
    position[kept[k]] = static_cast<int>(k);
  }
  EdgeList out;
  for (const Edge& e : edges)
    if (position[e.src] >= 0 && position[e.dst] >= 0) out.push_back({position[e.src], position[e.dst]});
  std::sort(out.begin(), out.end());
  return out;
}

int topk_count(int n, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("selection ratio must lie in (0, 1]");
  // The small offset keeps products such as 0.6 * 100 from rounding up.
  return std::min(n, static_cast<int>(std::ceil(r * n - 1e-9)));
}

std::vector<int> topk_indices(std::span<const double> scores, int k) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::clamp(k, 0, static_cast<int>(order.size()));
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

Selection topk_select(const Tensor& node_feat, const Eigen::VectorXd& p, double r) {
  if (p.size() != node_feat.cols()) throw ShapeError("projection vector width does not match features");
  const double norm = p.norm();
  if (!(norm > 0.0)) throw Error("projection vector has zero norm");
  const Eigen::VectorXd scores = node_feat * p / norm;
  const int n = static_cast<int>(node_feat.rows());
  Selection sel;
  sel.record.kept_indices = topk_indices(std::span<const double>(scores.data(), scores.size()), topk_count(n, r));
  sel.record.parent_size = n;
  sel.record.cached_features = node_feat;
  sel.gate.resize(sel.record.kept_indices.size());
  for (std::size_t k = 0; k < sel.record.kept_indices.size(); ++k)
    sel.gate(k) = 1.0 / (1.0 + std::exp(-scores(sel.record.kept_indices[k])));
  return sel;
}

Tensor restore(const SelectionRecord& selection, const Tensor& child_feat) {
  if (child_feat.rows() != static_cast<Eigen::Index>(selection.kept_indices.size()))
    throw ShapeError("restore: " + std::to_string(child_feat.rows()) + " child rows for " +
                     std::to_string(selection.kept_indices.size()) + " kept nodes");
  if (child_feat.cols() != selection.cached_features.cols())
    throw ShapeError("restore: child width differs from cached width");
  Tensor out = selection.cached_features;
  for (std::size_t k = 0; k < selection.kept_indices.size(); ++k)
    out.row(selection.kept_indices[k]) = child_feat.row(k);
  return out;
}

}  // namespace meshgnn
