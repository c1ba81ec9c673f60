#include "meshgnn/losses.hpp"

#include <cmath>
#include <string>

#include "meshgnn/error.hpp"
#include "meshgnn/graphkit.hpp"

namespace meshgnn {

namespace {

double l1(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

double bc_scale(std::span<const double> dirichlet_values, std::span<const double> neumann_values) {
  const double s = l1(dirichlet_values) + l1(neumann_values);
  return s == 0.0 ? 1.0 : s;
}

double bc_scale(const Tensor& f) {
  if (f.cols() != kNodeFeatures) throw ShapeError("bc_scale expects a node feature matrix");
  double s = 0.0;
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    if (f(i, nf::dirichlet_nonhom) != 0.0 || f(i, nf::neumann) != 0.0)
      s += std::abs(f(i, nf::bc_x)) + std::abs(f(i, nf::bc_y));
  return s == 0.0 ? 1.0 : s;
}

double loss_scaled_mae(const Tensor& pred, const Tensor& target, std::span<const double> dirichlet_values,
                       std::span<const double> neumann_values) {
  require_same_shape(pred, target, "loss_scaled_mae");
  if (pred.size() == 0) return 0.0;
  const double mae = (pred - target).cwiseAbs().sum() / static_cast<double>(pred.size());
  return bc_scale(dirichlet_values, neumann_values) * mae;
}

Var loss_scaled_mae(Tape& tape, Var pred, const Tensor& target, double scale_factor) {
  return scale(tape, mean_abs_error(tape, pred, target), scale_factor);
}

double loss_mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "loss_mse");
  if (pred.size() == 0) return 0.0;
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Var loss_mse(Tape& tape, Var pred, const Tensor& target) { return mean_squared_error(tape, pred, target); }

double relative_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("relative_error: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += std::abs(pred[i] - truth[i]);
    den += std::abs(truth[i]);
  }
  if (den == 0.0) throw Error("relative_error: reference has zero l1 norm");
  return num / den;
}

}  // namespace meshgnn
