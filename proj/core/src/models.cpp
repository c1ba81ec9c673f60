#include "meshgnn/models.hpp"

#include <string>

#include "meshgnn/error.hpp"
#include "meshgnn/rng.hpp"

namespace meshgnn {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::b: return "b";
    case ModelKind::b_sc: return "b-sc";
    case ModelKind::ea_gnn_sc: return "ea-gnn";
    case ModelKind::m_gnn_sc: return "m-gnn";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "b") return ModelKind::b;
  if (s == "b-sc") return ModelKind::b_sc;
  if (s == "ea-gnn") return ModelKind::ea_gnn_sc;
  if (s == "m-gnn") return ModelKind::m_gnn_sc;
  throw ConfigError("unknown model kind '" + s + "' (expected b, b-sc, ea-gnn or m-gnn)");
}

KindTraits traits(ModelKind kind) {
  switch (kind) {
    case ModelKind::b: return {false, false, true, false};
    case ModelKind::b_sc: return {true, false, false, false};
    case ModelKind::ea_gnn_sc: return {true, true, false, false};
    case ModelKind::m_gnn_sc: return {true, false, false, true};
  }
  return {};
}

GraphIndex GraphIndex::from_edges(const EdgeList& edges, int n_nodes) {
  GraphIndex ix;
  ix.n_nodes = n_nodes;
  ix.src.reserve(edges.size());
  ix.dst.reserve(edges.size());
  ix.has_in_edges.assign(n_nodes, 0.0);
  for (const Edge& e : edges) {
    ix.src.push_back(e.src);
    ix.dst.push_back(e.dst);
    ix.has_in_edges[e.dst] = 1.0;
  }
  return ix;
}

namespace {

void require_single_hidden(const Mlp& m, const char* name) {
  if (m.layers() != 2) throw ConfigError(std::string(name) + " must have exactly one hidden layer");
}

Var hidden_layer(Tape& t, Var pre, const Mlp& m) { return relu(t, add_row(t, pre, t.param(m.bias(0)))); }

Var output_layer(Tape& t, Var h, const Mlp& m) {
  return linear(t, h, t.param(m.weight(1)), t.param(m.bias(1)));
}

}  // namespace

GnOutput gn_block(Tape& t, const GnBlock& b, Var node, Var edge, const GraphIndex& ix) {
  require_single_hidden(b.chi, "chi");
  require_single_hidden(b.phi, "phi");
  require_single_hidden(b.gamma, "gamma");
  const int width = static_cast<int>(t.value(node).cols());
  if (t.value(node).rows() != ix.n_nodes || t.value(edge).rows() != static_cast<Eigen::Index>(ix.src.size()))
    throw ShapeError("gn_block: latent row counts do not match the graph");

  // The first layer of each MLP acts on a concatenation; it is applied slab by
  // slab so that node terms are computed per node before gathering to edges.
  Var w = t.param(b.chi.weight(0));
  Var h = add(t, gather_rows(t, matmul_rows(t, node, w, 0), ix.dst),
              gather_rows(t, matmul_rows(t, node, w, width), ix.src));
  h = hidden_layer(t, add(t, h, matmul_rows(t, edge, w, 2 * width)), b.chi);
  Var edge_out = output_layer(t, h, b.chi);

  w = t.param(b.phi.weight(0));
  Var m = add(t, gather_rows(t, matmul_rows(t, node, w, 0), ix.src), matmul_rows(t, edge_out, w, width));
  m = hidden_layer(t, m, b.phi);
  // The affine output layer commutes with the mean over incoming edges.
  Var agg = mask_rows(t, output_layer(t, scatter_mean(t, m, ix.dst, ix.n_nodes), b.phi), ix.has_in_edges);

  w = t.param(b.gamma.weight(0));
  Var g = hidden_layer(t, add(t, matmul_rows(t, node, w, 0), matmul_rows(t, agg, w, width)), b.gamma);
  g = output_layer(t, g, b.gamma);
  return {add(t, g, b.beta.forward(t, g)), edge_out};
}

Var graphsage_update(Tape& t, const SageWeights& sw, const Mlp& beta, Var node, const GraphIndex& ix) {
  if (t.value(node).rows() != ix.n_nodes) throw ShapeError("graphsage_update: latent rows do not match the graph");
  Var neigh = scatter_mean(t, gather_rows(t, node, ix.src), ix.dst, ix.n_nodes);
  Var h = relu(t, add(t, matmul(t, node, t.param(sw.w_self)), matmul(t, neigh, t.param(sw.w_neigh))));
  return add(t, h, beta.forward(t, h));
}

Tensor Model::predict(const Graph& graph) const {
  Tape tape(&params_);
  return tape.value(forward(tape, graph, false, 0));
}

void Model::check_input(const Graph& g) const {
  if (g.node_feat.rows() != g.n_nodes || g.node_feat.cols() != kNodeFeatures)
    throw ShapeError("node feature width " + std::to_string(g.node_feat.cols()) + ", expected " +
                     std::to_string(kNodeFeatures));
  if (g.edge_feat.rows() != g.edge_count() || g.edge_feat.cols() != kEdgeFeatures)
    throw ShapeError("edge feature width " + std::to_string(g.edge_feat.cols()) + ", expected " +
                     std::to_string(kEdgeFeatures));
}

Var Model::scale_output(Tape& t, Var decoded) const {
  const auto& s = config_.output_scale;
  if (s.empty()) return decoded;
  const int w = output_width(config_.target);
  if (static_cast<int>(s.size()) != w) throw ConfigError("output_scale needs one entry per output component");
  Tensor diag = Tensor::Zero(w, w);
  for (int c = 0; c < w; ++c) diag(c, c) = s[c];
  return matmul(t, decoded, t.constant(diag));
}

EaGnn::EaGnn(const ModelConfig& c, std::uint64_t init_seed) : Model(c) {
  if (c.gn_blocks < 1) throw ConfigError("EA-GNN needs at least one GN block");
  Rng rng(init_seed);
  const int L = c.latent, H = c.hidden;
  encode_node_ = Mlp(params_, "encode_node", {{kNodeFeatures, H, L}}, rng);
  encode_edge_ = Mlp(params_, "encode_edge", {{kEdgeFeatures, H, L}}, rng);
  block_.chi = Mlp(params_, "chi", {{3 * L, L, L}}, rng);
  block_.phi = Mlp(params_, "phi", {{2 * L, L, L}}, rng);
  block_.gamma = Mlp(params_, "gamma", {{2 * L, L, L}}, rng);
  block_.beta = Mlp(params_, "beta", {{L, L, L}}, rng);
  decode_ = Mlp(params_, "decode", {{L, H, output_width(c.target)}}, rng);
}

Var EaGnn::forward(Tape& t, const Graph& g, bool training, std::uint64_t seed) const {
  check_input(g);
  const GraphIndex ix = GraphIndex::from_edges(g.edges, g.n_nodes);
  Var u = encode_node_.forward(t, t.constant(g.node_feat));
  Var e = encode_edge_.forward(t, t.constant(g.edge_feat));
  u = dropout(t, u, config_.dropout, training, mix_seed(seed, 0));
  for (int k = 0; k < config_.gn_blocks; ++k) {
    const GnOutput out = gn_block(t, block_, u, e, ix);
    u = add(t, out.node, u);
    e = out.edge;
    if (k + 1 < config_.gn_blocks) u = dropout(t, u, config_.dropout, training, mix_seed(seed, k + 1));
  }
  return scale_output(t, decode_.forward(t, u));
}

MGnn::MGnn(const ModelConfig& c, std::uint64_t init_seed) : Model(c) {
  if (c.depth < 1) throw ConfigError("M-GNN depth must be >= 1");
  if (!(c.ratio > 0.0 && c.ratio <= 1.0)) throw ConfigError("M-GNN ratio must lie in (0, 1]");
  if (c.power < 1) throw ConfigError("M-GNN graph power must be >= 1");
  Rng rng(init_seed);
  const int L = c.latent, H = c.hidden;
  auto sage = [&](const std::string& name) {
    SageWeights w;
    w.w_self = params_.add(name + ".w_self", glorot_uniform(L, L, rng));
    w.w_neigh = params_.add(name + ".w_neigh", glorot_uniform(L, L, rng));
    return w;
  };
  encode_ = Mlp(params_, "encode_node", {{kNodeFeatures, H, L}}, rng);
  initial_ = sage("sage.initial");
  for (int l = 1; l <= c.depth; ++l) {
    down_.push_back(sage("sage.down" + std::to_string(l)));
    projection_.push_back(params_.add("pool" + std::to_string(l) + ".p", glorot_uniform(1, L, rng)));
  }
  for (int l = 1; l <= c.depth; ++l) up_.push_back(sage("sage.up" + std::to_string(l)));
  beta_ = Mlp(params_, "beta", {{L, L, L}}, rng);
  decode_ = Mlp(params_, "decode", {{L, H, output_width(c.target)}}, rng);
}

std::vector<int> MGnn::level_sizes(int n) const {
  std::vector<int> sizes{n};
  for (int l = 1; l <= config_.depth; ++l) {
    const int k = topk_count(sizes.back(), config_.ratio);
    if (k < 3)
      throw ConfigError("graph of " + std::to_string(n) + " nodes is too small for depth " +
                        std::to_string(config_.depth) + " (level " + std::to_string(l) + " would have " +
                        std::to_string(k) + " nodes)");
    sizes.push_back(k);
  }
  return sizes;
}

Var MGnn::forward(Tape& t, const Graph& g, bool training, std::uint64_t seed) const {
  check_input(g);
  const std::vector<int> sizes = level_sizes(g.n_nodes);
  const int d = config_.depth;
  std::uint64_t drop = 0;
  auto maybe_drop = [&](Var v) { return dropout(t, v, config_.dropout, training, mix_seed(seed, drop++)); };

  Var u = maybe_drop(encode_.forward(t, t.constant(g.node_feat)));
  EdgeList level_edges = g.edges;
  u = maybe_drop(graphsage_update(t, initial_, beta_, u, GraphIndex::from_edges(level_edges, g.n_nodes)));

  std::vector<GraphIndex> parent(d);
  std::vector<std::vector<int>> kept(d);
  std::vector<Var> cache(d), skip(d);
  for (int l = 0; l < d; ++l) {
    const EdgeList powered = graph_power(level_edges, sizes[l], config_.power);
    parent[l] = GraphIndex::from_edges(powered, sizes[l]);
    Var scores = scalar_projection(t, u, t.param(projection_[l]));
    const Tensor& sv = t.value(scores);
    kept[l] = topk_indices(std::span<const double>(sv.data(), sv.size()), sizes[l + 1]);
    if (t.branch_tracking()) {
      std::uint64_t token = static_cast<std::uint64_t>(l) + 1;
      for (int i : kept[l]) token = mix_seed(token, static_cast<std::uint64_t>(i));
      t.record_branch(token);
    }

    cache[l] = u;
    Var gated = scale_rows(t, gather_rows(t, u, kept[l]), sigmoid(t, gather_rows(t, scores, kept[l])));
    level_edges = induced_subgraph(powered, sizes[l], kept[l]);
    u = graphsage_update(t, down_[l], beta_, gated, GraphIndex::from_edges(level_edges, sizes[l + 1]));
    skip[l] = u;
    u = maybe_drop(u);
  }
  for (int l = d - 1; l >= 0; --l) {
    u = add(t, u, skip[l]);
    u = restore_rows(t, u, cache[l], kept[l]);
    u = graphsage_update(t, up_[l], beta_, u, parent[l]);
    if (l > 0) u = maybe_drop(u);
  }
  return scale_output(t, decode_.forward(t, u));
}

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t init_seed) {
  if (traits(config.kind).multigraph) return std::make_unique<MGnn>(config, init_seed);
  return std::make_unique<EaGnn>(config, init_seed);
}

std::size_t parameter_count(const ModelConfig& config) {
  return make_model(config, 0)->params().parameter_count();
}

}  // namespace meshgnn
