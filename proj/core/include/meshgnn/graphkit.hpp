#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "meshgnn/fem.hpp"
#include "meshgnn/geomesh.hpp"
#include "meshgnn/simcoords.hpp"
#include "meshgnn/tensor.hpp"

namespace meshgnn {

inline constexpr int kNodeFeatures = 14;
inline constexpr int kEdgeFeatures = 4;

// Node feature columns.
namespace nf {
enum : int {
  x = 0,
  y,
  interior,
  boundary,
  dirichlet_hom,
  dirichlet_nonhom,
  neumann,
  bc_x,
  bc_y,
  bc_magnitude,
  body_force,
  f_x,
  f_y,
  f_magnitude,
};
}

// Edge feature columns.
namespace ef {
enum : int { distance = 0, dx, dy, augmented };
}

enum class Target : std::uint8_t { displacement, stress };

inline int output_width(Target t) { return t == Target::displacement ? 2 : 3; }

struct Edge {
  int src = 0;
  int dst = 0;
  auto operator<=>(const Edge&) const = default;
};

using EdgeList = std::vector<Edge>;

// Directed graph with per-node and per-edge attributes. Targets are empty when
// the graph was built without a solution.
struct Graph {
  int n_nodes = 0;
  EdgeList edges;
  Tensor node_feat;
  Tensor edge_feat;
  Tensor displacement;
  Tensor stress;

  int edge_count() const { return static_cast<int>(edges.size()); }
  const Tensor& target(Target t) const { return t == Target::displacement ? displacement : stress; }
  std::vector<int> sources() const;
  std::vector<int> destinations() const;
};

// Throws ShapeError on asymmetric, self-looped or duplicated edges or on
// feature matrices of the wrong shape.
void validate(const Graph& graph);

// One directed edge pair per unique mesh edge, features and targets in the
// frame given by `transform`. Pass an empty solution to omit targets.
Graph mesh_to_graph(const Mesh& mesh, const BoundarySpec& bcs, const FemSolution& solution,
                    const FrameTransform& transform);

// Adds round(a_perc * undirected edge count) random undirected edges between
// unconnected node pairs, flagged as augmented.
Graph augment_edges(const Graph& graph, double a_perc, std::uint64_t seed);

// Every ordered pair (i, j), i != j, within shortest-path distance l. Sorted.
EdgeList graph_power(const EdgeList& edges, int n_nodes, int l);

// Edges among `kept` nodes, relabelled to positions in `kept`. Sorted.
EdgeList induced_subgraph(const EdgeList& edges, int n_nodes, std::span<const int> kept);

int topk_count(int n, double r);

// Indices of the k largest scores, ties to the lower index, returned sorted.
std::vector<int> topk_indices(std::span<const double> scores, int k);

struct SelectionRecord {
  std::vector<int> kept_indices;
  int parent_size = 0;
  Tensor cached_features;
};

struct Selection {
  SelectionRecord record;
  Eigen::VectorXd gate;
};

Selection topk_select(const Tensor& node_feat, const Eigen::VectorXd& p, double r);

// Places child rows back at their parent positions; removed rows come from the
// cache.
Tensor restore(const SelectionRecord& selection, const Tensor& child_feat);

}  // namespace meshgnn
