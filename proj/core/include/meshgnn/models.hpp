#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "meshgnn/graphkit.hpp"
#include "meshgnn/nn.hpp"

namespace meshgnn {

enum class ModelKind : std::uint8_t { b, b_sc, ea_gnn_sc, m_gnn_sc };

// Command-line spellings: b, b-sc, ea-gnn, m-gnn.
const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// What a model kind implies for its input pipeline and loss.
struct KindTraits {
  bool simulation_coords = true;
  bool augment = false;
  bool mse_loss = false;
  bool multigraph = false;
};

KindTraits traits(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::ea_gnn_sc;
  Target target = Target::displacement;
  int latent = 128;
  int hidden = 64;  // encoder and decoder hidden width
  int gn_blocks = 6;
  double a_perc = 0.2;  // used by EA-GNN only; B and B+SC never augment
  double dropout = 0.1;
  int depth = 3;
  double ratio = 0.6;
  int power = 3;
  // Fixed per-component factor applied to the decoder output; empty means 1.
  // Training sets it to the RMS of the training targets so the decoder works
  // on unit-scale values.
  std::vector<double> output_scale;
};

// Edge endpoints of a graph in the form the message-passing ops consume.
struct GraphIndex {
  int n_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<double> has_in_edges;  // 1.0 where the node receives a message

  static GraphIndex from_edges(const EdgeList& edges, int n_nodes);
};

struct GnBlock {
  Mlp chi;    // edge update on [u_dst, u_src, e]
  Mlp phi;    // message on [u_src, e']
  Mlp gamma;  // node update on [u, mean message]
  Mlp beta;   // residual refinement
};

struct GnOutput {
  Var node;
  Var edge;
};

// One round of edge update, mean message aggregation and node update. Nodes
// without incoming edges aggregate the zero vector. All four MLPs must have a
// single hidden layer.
GnOutput gn_block(Tape& tape, const GnBlock& block, Var node, Var edge, const GraphIndex& index);

struct SageWeights {
  ParamId w_self;
  ParamId w_neigh;
};

// h = ReLU(u W_self + mean_nbr(u) W_neigh); returns h + beta(h).
Var graphsage_update(Tape& tape, const SageWeights& w, const Mlp& beta, Var node, const GraphIndex& index);

class Model {
 public:
  virtual ~Model() = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // n x output_width(target) predictions in the graph's frame.
  virtual Var forward(Tape& tape, const Graph& graph, bool training, std::uint64_t seed) const = 0;

  Tensor predict(const Graph& graph) const;

 protected:
  explicit Model(const ModelConfig& config) : config_(config) {}
  void check_input(const Graph& graph) const;
  Var scale_output(Tape& tape, Var decoded) const;

  ModelConfig config_;
  ParamStore params_;
};

class EaGnn final : public Model {
 public:
  EaGnn(const ModelConfig& config, std::uint64_t init_seed);
  Var forward(Tape& tape, const Graph& graph, bool training, std::uint64_t seed) const override;
  const GnBlock& block() const { return block_; }

 private:
  Mlp encode_node_, encode_edge_, decode_;
  GnBlock block_;
};

class MGnn final : public Model {
 public:
  MGnn(const ModelConfig& config, std::uint64_t init_seed);
  Var forward(Tape& tape, const Graph& graph, bool training, std::uint64_t seed) const override;

  // Node count at each level of the hierarchy, finest first. Throws
  // ConfigError when a level would fall below 3 nodes.
  std::vector<int> level_sizes(int n_nodes) const;

 private:
  Mlp encode_, decode_, beta_;
  SageWeights initial_;
  std::vector<SageWeights> down_, up_;
  std::vector<ParamId> projection_;
};

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t init_seed);

// Trainable parameter count of the model `config` describes.
std::size_t parameter_count(const ModelConfig& config);

}  // namespace meshgnn
