#pragma once

#include <cstdint>
#include <vector>

#include "meshgnn/dataset.hpp"
#include "meshgnn/graphkit.hpp"
#include "meshgnn/models.hpp"

namespace meshgnn::testing {

// Structured nx x ny grid of nodes, each cell split along its diagonal.
Mesh grid_mesh(int nx, int ny, double spacing = 1.0);

// Delaunay mesh of the unit square.
Mesh unit_square_mesh(double h);

// Left edge held in x, bottom-left corner held in y, unit traction on the
// edge x = 1. Expects a mesh of the unit square.
LoadCase uniaxial_tension(const Mesh& m);

// One solved sample on a random curve, with the frame filled in.
SampleRecord random_sample(std::uint64_t seed, double h = 0.1);

// Solved sample on a grid mesh; 3 x 4 gives a 12-node graph.
SampleRecord grid_sample(int nx, int ny, std::uint64_t seed);

// Symmetric random edge list without self loops; each unordered pair is
// present with probability p.
EdgeList random_edges(int n, double p, std::uint64_t seed);

struct GradientCheck {
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped = 0;  // perturbation crossed a ReLU or top-k boundary
};

// Richardson-extrapolated central differences against backward() for the
// loss sum(w . forward(graph)), with a fixed random weighting w and dropout
// disabled. Scalar parameters are drawn at random until `n_checked` have
// been compared or `max_attempts` draws are spent. A draw is skipped when
// any perturbed forward pass takes a different discrete branch than the
// unperturbed one, because the loss is not differentiable across it. The
// relative error is |a - n| / max(|a|, |n|, floor). Round-off in the loss
// grows like eps * |loss| / step and swamps gradients near 1e-6 when the
// step is small, so the default is large and extrapolation removes the
// truncation term instead.
GradientCheck gradient_check(Model& model, const Graph& graph, int n_checked, std::uint64_t seed,
                             double step = 2e-3, double floor = 1e-7, int max_attempts = 4000);

// Largest absolute entry of a - b.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace meshgnn::testing
