#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "meshgnn/tensor.hpp"

namespace meshgnn {

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

// Reverse-mode differentiation tape. Every op appends a node holding its value
// and a closure that pushes the node's gradient into its parents. A tape is
// single-use: backward() consumes it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  // Parameter gradients are added into `store` by backward().
  explicit Tape(ParamStore* store) : store_(store), sink_(store) {}
  // Read-only binding for inference; backward() into parameters throws.
  explicit Tape(const ParamStore* store) : store_(store) {}

  Var constant(Tensor value);
  // Differentiable input whose gradient can be read after backward().
  Var input(Tensor value);
  // Parameter from the bound store; repeated calls return the same node.
  Var param(ParamId id);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Empty when no gradient reached the node.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Propagates `output_grad` (same shape as the output) and adds parameter
  // gradients into the bound ParamStore. Throws Error on a consumed tape.
  void backward(Var output, const Tensor& output_grad);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Hash of every discrete branch taken during the forward pass (ReLU masks,
  // top-k choices). Two forward passes with equal signatures lie on the same
  // smooth piece of the model.
  // Tracking is off by default because hashing every ReLU mask is not free.
  std::uint64_t branch_signature() const { return signature_; }
  void set_branch_tracking(bool on) { track_branches_ = on; }
  bool branch_tracking() const { return track_branches_; }
  void record_branch(std::uint64_t token);

  // Op-implementation interface.
  Var record(Tensor value, bool requires_grad, BackwardFn backward);
  const Tensor& grad_of(int node) const { return nodes_[node].grad; }
  const Tensor& value_of(int node) const { return nodes_[node].value; }
  bool needs(int node) const { return nodes_[node].requires_grad; }

  // Gradient expressions never read the buffer they are added into, so the
  // aliasing-safe temporaries Eigen would otherwise create are skipped.
  template <typename Expr>
  void accumulate(int node, const Expr& g) {
    Tensor& dst = nodes_[node].grad;
    if (dst.size() == 0) dst.noalias() = g;
    else dst.noalias() += g;
  }
  Tensor& grad_buffer(int node);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    int param = -1;
  };
  std::vector<Node> nodes_;
  std::vector<int> param_node_;
  const ParamStore* store_ = nullptr;
  ParamStore* sink_ = nullptr;
  bool consumed_ = false;
  bool track_branches_ = false;
  std::uint64_t signature_ = 0x6A09E667F3BCC909ULL;
};

// Differentiable ops. Shapes are checked and mismatches throw ShapeError.
Var matmul(Tape& t, Var a, Var b);
// x * w + b with b a 1 x out row broadcast over rows.
Var linear(Tape& t, Var x, Var w, Var b);
// x * w.middleRows(row_offset, x.cols()): one slab of a weight applied to one
// block of a concatenated input, without materialising the concatenation.
Var matmul_rows(Tape& t, Var x, Var w, int row_offset);
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var x, Var row);
Var scale(Tape& t, Var x, double factor);
Var relu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var concat_cols(Tape& t, Var a, Var b);
Var gather_rows(Tape& t, Var x, std::span<const int> index);
// Row r of the result sums (or averages) the rows i of x with index[i] == r.
// Rows that receive nothing are zero.
Var scatter_sum(Tape& t, Var x, std::span<const int> index, int rows);
Var scatter_mean(Tape& t, Var x, std::span<const int> index, int rows);
// Multiplies row i of x by s(i, 0).
Var scale_rows(Tape& t, Var x, Var s);
// Multiplies row i of x by a constant weight.
Var mask_rows(Tape& t, Var x, std::span<const double> weights);
// Scalar projection of each row of u onto p (1 x F): u p^T / |p|.
Var scalar_projection(Tape& t, Var u, Var p);
// Row i of the result is child row k if kept[k] == i, otherwise cache row i.
Var restore_rows(Tape& t, Var child, Var cache, std::span<const int> kept);
// Inverted dropout; identity when !training or rate == 0.
Var dropout(Tape& t, Var x, double rate, bool training, std::uint64_t seed);
Var sum(Tape& t, Var x);
Var mean_abs_error(Tape& t, Var pred, const Tensor& target);
Var mean_squared_error(Tape& t, Var pred, const Tensor& target);

}  // namespace meshgnn
