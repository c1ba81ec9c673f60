#pragma once

#include <span>
#include <vector>

#include "meshgnn/geometry.hpp"

namespace meshgnn {

// Rigid frame: simulation coordinates are x_sc = R^T (x - t). The columns of
// R are the principal axes expressed in the physical frame.
struct FrameTransform {
  Vec2 translation = Vec2::Zero();
  Mat2 rotation = Mat2::Identity();

  static FrameTransform identity() { return {}; }

  Vec2 to_local(const Vec2& p) const { return rotation.transpose() * (p - translation); }
  Vec2 to_global(const Vec2& q) const { return rotation * q + translation; }
};

struct SimCoords {
  std::vector<Vec2> points;
  FrameTransform transform;
};

// Centres on the centroid and rotates onto the covariance eigenvectors
// (largest variance first). The first axis points toward positive skewness of
// the projected coordinates (or toward the largest |projection| when the
// skewness is below 1e-9 in magnitude); the second axis completes a proper
// rotation. Throws DegenerateGeometryError for collinear input.
SimCoords to_simulation_coords(std::span<const Vec2> points);

// Physical-frame vector into the simulation frame (R^T v).
Vec2 map_vector(const FrameTransform& transform, const Vec2& v);
// Simulation-frame vector back to the physical frame (R v).
Vec2 map_vector_back(const FrameTransform& transform, const Vec2& v);

// Stress tensors in Voigt form: R^T sigma R and R sigma R^T respectively.
Stress map_stress(const FrameTransform& transform, const Stress& physical);
Stress map_stress_back(const FrameTransform& transform, const Stress& local);

struct FieldPair {
  std::vector<Vec2> displacement;
  std::vector<Stress> stress;
};

// Maps per-node predictions from simulation coordinates to the physical frame.
FieldPair map_output_back(const FrameTransform& transform, std::span<const Vec2> displacement,
                          std::span<const Stress> stress);

}  // namespace meshgnn
