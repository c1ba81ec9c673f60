#include "meshgnn/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "meshgnn/error.hpp"
#include "meshgnn/rng.hpp"

namespace meshgnn {

namespace {

std::string shape(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

std::vector<int> copy_index(std::span<const int> index, Eigen::Index rows, const char* op) {
  std::vector<int> out(index.begin(), index.end());
  for (int i : out)
    if (i < 0 || i >= rows) throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range");
  return out;
}

}  // namespace

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  if (consumed_) throw Error("tape already consumed by backward()");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::input(Tensor value) { return record(std::move(value), true, nullptr); }

Var Tape::param(ParamId id) {
  if (store_ == nullptr) throw Error("tape has no parameter store");
  if (!id.valid() || id.index >= store_->size()) throw Error("invalid parameter id");
  if (param_node_.size() < static_cast<std::size_t>(store_->size()))
    param_node_.resize(store_->size(), -1);
  int& slot = param_node_[id.index];
  if (slot >= 0) return Var{slot};
  Var v = record(store_->value(id), true, nullptr);
  nodes_[v.id].param = id.index;
  slot = v.id;
  return v;
}

Tensor& Tape::grad_buffer(int node) {
  Tensor& g = nodes_[node].grad;
  if (g.size() == 0) g = Tensor::Zero(nodes_[node].value.rows(), nodes_[node].value.cols());
  return g;
}

void Tape::record_branch(std::uint64_t token) {
  if (track_branches_) signature_ = mix_seed(signature_, token);
}

void Tape::backward(Var output, const Tensor& output_grad) {
  if (consumed_) throw Error("tape already consumed by backward()");
  consumed_ = true;
  require_same_shape(nodes_[output.id].value, output_grad, "backward");
  if (!nodes_[output.id].requires_grad) return;
  accumulate(output.id, output_grad);
  for (int i = output.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, i);
    if (node.param >= 0) {
      if (sink_ == nullptr) throw Error("backward() on a tape bound to a read-only parameter store");
      Tensor& g = sink_->grad(ParamId{node.param});
      if (g.size() == 0) g = node.grad;
      else g += node.grad;
    }
  }
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows()) throw ShapeError("matmul: " + shape(av) + " * " + shape(bv));
  Tensor out = av * bv;
  int ai = a.id, bi = b.id;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b), [ai, bi](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs(ai)) tp.accumulate(ai, g * tp.value_of(bi).transpose());
    if (tp.needs(bi)) tp.accumulate(bi, tp.value_of(ai).transpose() * g);
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
    throw ShapeError("linear: x " + shape(xv) + ", w " + shape(wv) + ", b " + shape(bv));
  Tensor out(xv.rows(), wv.cols());
  out.noalias() = xv * wv;
  out.rowwise() += bv.row(0);
  int xi = x.id, wi = w.id, bi = b.id;
  bool rg = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b);
  return t.record(std::move(out), rg, [xi, wi, bi](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs(xi)) tp.accumulate(xi, g * tp.value_of(wi).transpose());
    if (tp.needs(wi)) tp.accumulate(wi, tp.value_of(xi).transpose() * g);
    if (tp.needs(bi)) tp.accumulate(bi, g.colwise().sum());
  });
}

Var matmul_rows(Tape& t, Var x, Var w, int row_offset) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (row_offset < 0 || row_offset + xv.cols() > wv.rows())
    throw ShapeError("matmul_rows: x " + shape(xv) + " against w " + shape(wv) + " at row " +
                     std::to_string(row_offset));
  Tensor out(xv.rows(), wv.cols());
  out.noalias() = xv * wv.middleRows(row_offset, xv.cols());
  int xi = x.id, wi = w.id;
  Eigen::Index k = xv.cols();
  return t.record(std::move(out), t.requires_grad(x) || t.requires_grad(w),
                  [xi, wi, row_offset, k](Tape& tp, int self) {
                    const Tensor& g = tp.grad_of(self);
                    if (tp.needs(xi))
                      tp.accumulate(xi, g * tp.value_of(wi).middleRows(row_offset, k).transpose());
                    if (tp.needs(wi))
                      tp.grad_buffer(wi).middleRows(row_offset, k).noalias() += tp.value_of(xi).transpose() * g;
                  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Tensor out = t.value(a) + t.value(b);
  int ai = a.id, bi = b.id;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b), [ai, bi](Tape& tp, int self) {
    if (tp.needs(ai)) tp.accumulate(ai, tp.grad_of(self));
    if (tp.needs(bi)) tp.accumulate(bi, tp.grad_of(self));
  });
}

Var add_row(Tape& t, Var x, Var row) {
  const Tensor& xv = t.value(x);
  const Tensor& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) throw ShapeError("add_row: " + shape(xv) + " + " + shape(rv));
  Tensor out = xv;
  out.rowwise() += rv.row(0);
  int xi = x.id, ri = row.id;
  return t.record(std::move(out), t.requires_grad(x) || t.requires_grad(row), [xi, ri](Tape& tp, int self) {
    if (tp.needs(xi)) tp.accumulate(xi, tp.grad_of(self));
    if (tp.needs(ri)) tp.accumulate(ri, tp.grad_of(self).colwise().sum());
  });
}

Var scale(Tape& t, Var x, double factor) {
  Tensor out = t.value(x) * factor;
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x),
                  [xi, factor](Tape& tp, int self) { tp.accumulate(xi, tp.grad_of(self) * factor); });
}

Var relu(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out = xv.cwiseMax(0.0);
  if (t.branch_tracking()) {
    std::uint64_t h = 0x9E3779B97F4A7C15ULL;
    const double* p = xv.data();
    for (Eigen::Index i = 0; i < xv.size(); ++i)
      if (p[i] > 0.0) h = (h ^ static_cast<std::uint64_t>(i)) * 0x100000001B3ULL;
    t.record_branch(h);
  }
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi](Tape& tp, int self) {
    const Tensor& xv2 = tp.value_of(xi);
    tp.accumulate(xi, (xv2.array() > 0.0).select(tp.grad_of(self), 0.0));
  });
}

Var sigmoid(Tape& t, Var x) {
  Tensor out = (1.0 + (-t.value(x).array()).exp()).inverse().matrix();
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi](Tape& tp, int self) {
    const auto y = tp.value_of(self).array();
    tp.accumulate(xi, (tp.grad_of(self).array() * y * (1.0 - y)).matrix());
  });
}

Var tanh(Tape& t, Var x) {
  Tensor out = t.value(x).array().tanh().matrix();
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi](Tape& tp, int self) {
    const auto y = tp.value_of(self).array();
    tp.accumulate(xi, (tp.grad_of(self).array() * (1.0 - y * y)).matrix());
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: " + shape(av) + " | " + shape(bv));
  Tensor out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  int ai = a.id, bi = b.id;
  Eigen::Index ca = av.cols(), cb = bv.cols();
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [ai, bi, ca, cb](Tape& tp, int self) {
                    const Tensor& g = tp.grad_of(self);
                    if (tp.needs(ai)) tp.accumulate(ai, g.leftCols(ca));
                    if (tp.needs(bi)) tp.accumulate(bi, g.rightCols(cb));
                  });
}

Var gather_rows(Tape& t, Var x, std::span<const int> index) {
  const Tensor& xv = t.value(x);
  std::vector<int> idx = copy_index(index, xv.rows(), "gather_rows");
  Tensor out(static_cast<Eigen::Index>(idx.size()), xv.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = xv.row(idx[r]);
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi, idx = std::move(idx)](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& dst = tp.grad_buffer(xi);
    for (std::size_t r = 0; r < idx.size(); ++r) dst.row(idx[r]) += g.row(r);
  });
}

namespace {

Var scatter_weighted(Tape& t, Var x, std::span<const int> index, int rows, bool mean, const char* op) {
  const Tensor& xv = t.value(x);
  if (static_cast<Eigen::Index>(index.size()) != xv.rows())
    throw ShapeError(std::string(op) + ": " + std::to_string(index.size()) + " indices for " + shape(xv));
  std::vector<int> idx = copy_index(index, rows, op);
  std::vector<double> weight(idx.size(), 1.0);
  if (mean) {
    std::vector<int> count(rows, 0);
    for (int i : idx) ++count[i];
    for (std::size_t r = 0; r < idx.size(); ++r) weight[r] = 1.0 / count[idx[r]];
  }
  Tensor out = Tensor::Zero(rows, xv.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(idx[r]) += weight[r] * xv.row(r);
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x),
                  [xi, idx = std::move(idx), weight = std::move(weight)](Tape& tp, int self) {
                    const Tensor& g = tp.grad_of(self);
                    Tensor& dst = tp.grad_buffer(xi);
                    for (std::size_t r = 0; r < idx.size(); ++r) dst.row(r) += weight[r] * g.row(idx[r]);
                  });
}

}  // namespace

Var scatter_sum(Tape& t, Var x, std::span<const int> index, int rows) {
  return scatter_weighted(t, x, index, rows, false, "scatter_sum");
}

Var scatter_mean(Tape& t, Var x, std::span<const int> index, int rows) {
  return scatter_weighted(t, x, index, rows, true, "scatter_mean");
}

Var scale_rows(Tape& t, Var x, Var s) {
  const Tensor& xv = t.value(x);
  const Tensor& sv = t.value(s);
  if (sv.cols() != 1 || sv.rows() != xv.rows()) throw ShapeError("scale_rows: " + shape(xv) + " by " + shape(sv));
  Tensor out = sv.col(0).asDiagonal() * xv;
  int xi = x.id, si = s.id;
  return t.record(std::move(out), t.requires_grad(x) || t.requires_grad(s), [xi, si](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs(xi)) tp.accumulate(xi, tp.value_of(si).col(0).asDiagonal() * g);
    if (tp.needs(si)) tp.accumulate(si, g.cwiseProduct(tp.value_of(xi)).rowwise().sum());
  });
}

Var mask_rows(Tape& t, Var x, std::span<const double> weights) {
  const Tensor& xv = t.value(x);
  if (static_cast<Eigen::Index>(weights.size()) != xv.rows())
    throw ShapeError("mask_rows: " + std::to_string(weights.size()) + " weights for " + shape(xv));
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(), weights.size());
  Tensor out = w.asDiagonal() * xv;
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi, w = std::move(w)](Tape& tp, int self) {
    tp.accumulate(xi, w.asDiagonal() * tp.grad_of(self));
  });
}

Var scalar_projection(Tape& t, Var u, Var p) {
  const Tensor& uv = t.value(u);
  const Tensor& pv = t.value(p);
  if (pv.rows() != 1 || pv.cols() != uv.cols()) throw ShapeError("scalar_projection: " + shape(uv) + " onto " + shape(pv));
  double norm = pv.norm();
  if (!(norm > 0.0)) throw Error("scalar_projection: projection vector has zero norm");
  Tensor out = uv * pv.transpose() / norm;
  int ui = u.id, pi = p.id;
  return t.record(std::move(out), t.requires_grad(u) || t.requires_grad(p), [ui, pi, norm](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);  // n x 1
    const Tensor& pv2 = tp.value_of(pi);
    if (tp.needs(ui)) tp.accumulate(ui, g * pv2 / norm);
    if (tp.needs(pi)) {
      // s = u p / |p|  =>  ds/dp = u / |p| - s p / |p|^2
      const Tensor& s = tp.value_of(self);
      Tensor gp = g.transpose() * tp.value_of(ui) / norm;
      gp -= (g.col(0).dot(s.col(0)) / (norm * norm)) * pv2;
      tp.accumulate(pi, gp);
    }
  });
}

Var restore_rows(Tape& t, Var child, Var cache, std::span<const int> kept) {
  const Tensor& cv = t.value(child);
  const Tensor& kv = t.value(cache);
  if (cv.cols() != kv.cols() || static_cast<Eigen::Index>(kept.size()) != cv.rows())
    throw ShapeError("restore_rows: child " + shape(cv) + ", cache " + shape(kv) + ", " +
                     std::to_string(kept.size()) + " kept");
  std::vector<int> idx = copy_index(kept, kv.rows(), "restore_rows");
  std::vector<char> is_kept(kv.rows(), 0);
  for (int i : idx) is_kept[i] = 1;
  Tensor out = kv;
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(idx[r]) = cv.row(r);
  int ci = child.id, ki = cache.id;
  return t.record(std::move(out), t.requires_grad(child) || t.requires_grad(cache),
                  [ci, ki, idx = std::move(idx), is_kept = std::move(is_kept)](Tape& tp, int self) {
                    const Tensor& g = tp.grad_of(self);
                    if (tp.needs(ci)) {
                      Tensor& dst = tp.grad_buffer(ci);
                      for (std::size_t r = 0; r < idx.size(); ++r) dst.row(r) += g.row(idx[r]);
                    }
                    if (tp.needs(ki)) {
                      Tensor& dst = tp.grad_buffer(ki);
                      for (Eigen::Index r = 0; r < g.rows(); ++r)
                        if (!is_kept[r]) dst.row(r) += g.row(r);
                    }
                  });
}

Var dropout(Tape& t, Var x, double rate, bool training, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const Tensor& xv = t.value(x);
  Tensor mask(xv.rows(), xv.cols());
  Rng rng(seed);
  const double keep = 1.0 / (1.0 - rate);
  double* m = mask.data();
  for (Eigen::Index i = 0; i < mask.size(); ++i) m[i] = rng.uniform() < rate ? 0.0 : keep;
  Tensor out = xv.cwiseProduct(mask);
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi, mask = std::move(mask)](Tape& tp, int self) {
    tp.accumulate(xi, tp.grad_of(self).cwiseProduct(mask));
  });
}

Var sum(Tape& t, Var x) {
  Tensor out(1, 1);
  out(0, 0) = t.value(x).sum();
  int xi = x.id;
  return t.record(std::move(out), t.requires_grad(x), [xi](Tape& tp, int self) {
    const Tensor& xv = tp.value_of(xi);
    tp.accumulate(xi, Tensor::Constant(xv.rows(), xv.cols(), tp.grad_of(self)(0, 0)));
  });
}

Var mean_abs_error(Tape& t, Var pred, const Tensor& target) {
  const Tensor& pv = t.value(pred);
  require_same_shape(pv, target, "mean_abs_error");
  if (pv.size() == 0) throw ShapeError("mean_abs_error: empty input");
  Tensor diff = pv - target;
  Tensor out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / static_cast<double>(diff.size());
  int pi = pred.id;
  // Subgradient 0 at exact agreement.
  Tensor sign = diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
  return t.record(std::move(out), t.requires_grad(pred), [pi, sign = std::move(sign)](Tape& tp, int self) {
    tp.accumulate(pi, sign * (tp.grad_of(self)(0, 0) / static_cast<double>(sign.size())));
  });
}

Var mean_squared_error(Tape& t, Var pred, const Tensor& target) {
  const Tensor& pv = t.value(pred);
  require_same_shape(pv, target, "mean_squared_error");
  if (pv.size() == 0) throw ShapeError("mean_squared_error: empty input");
  Tensor diff = pv - target;
  Tensor out(1, 1);
  out(0, 0) = diff.squaredNorm() / static_cast<double>(diff.size());
  int pi = pred.id;
  return t.record(std::move(out), t.requires_grad(pred), [pi, diff = std::move(diff)](Tape& tp, int self) {
    tp.accumulate(pi, diff * (2.0 * tp.grad_of(self)(0, 0) / static_cast<double>(diff.size())));
  });
}

}  // namespace meshgnn
