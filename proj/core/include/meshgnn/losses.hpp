#pragma once

#include <span>

#include "meshgnn/tape.hpp"

namespace meshgnn {

// l1 norm of the prescribed non-homogeneous Dirichlet components plus the
// Neumann traction components; 1 when both are empty or zero.
double bc_scale(std::span<const double> dirichlet_values, std::span<const double> neumann_values);
// Same, read from a node feature matrix.
double bc_scale(const Tensor& node_feat);

// s * mean |pred - target| for one sample.
double loss_scaled_mae(const Tensor& pred, const Tensor& target, std::span<const double> dirichlet_values,
                       std::span<const double> neumann_values);
Var loss_scaled_mae(Tape& tape, Var pred, const Tensor& target, double scale);

double loss_mse(const Tensor& pred, const Tensor& target);
Var loss_mse(Tape& tape, Var pred, const Tensor& target);

// |pred - truth|_1 / |truth|_1. Throws Error when |truth|_1 is zero.
double relative_error(std::span<const double> pred, std::span<const double> truth);

}  // namespace meshgnn
