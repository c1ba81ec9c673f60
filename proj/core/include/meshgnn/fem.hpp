#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "meshgnn/geomesh.hpp"

namespace meshgnn {

// Plane-stress linear elasticity on constant-strain triangles. Degrees of
// freedom are interleaved: dof 2i is u_x of node i, dof 2i+1 is u_y.

struct FemSolution {
  std::vector<Vec2> displacement;
  std::vector<Stress> stress;
};

struct DofConstraint {
  int dof = 0;
  double value = 0.0;
};

struct TractionEdge {
  int a = 0;
  int b = 0;
  Vec2 traction = Vec2::Zero();
};

// Loads and supports for one solve. body_force is a force-per-area density
// evaluated at triangle centroids; empty means no body load.
struct LoadCase {
  std::vector<DofConstraint> constraints;
  std::vector<TractionEdge> tractions;
  std::function<Vec2(const Vec2&)> body_force;
};

LoadCase load_case(const Mesh& mesh, const BoundarySpec& bcs);

// Full stiffness in coordinate format plus the Dirichlet-eliminated system
// K_ff u_f = f_f - K_fd u_d.
struct SparseSystem {
  int dimension = 0;
  std::vector<Eigen::Triplet<double>> entries;
  Eigen::VectorXd rhs;
  std::vector<int> fixed_dofs;
  Eigen::VectorXd fixed_values;
  std::vector<int> free_dofs;
  Eigen::SparseMatrix<double, Eigen::RowMajor> reduced_matrix;
  Eigen::VectorXd reduced_rhs;

  Eigen::SparseMatrix<double> matrix() const;
};

// Builds the eliminated system from a full matrix. Repeated constraints on
// one dof must agree.
SparseSystem make_system(int dimension, std::vector<Eigen::Triplet<double>> entries,
                         Eigen::VectorXd rhs, const std::vector<DofConstraint>& constraints);

// 3x3 plane-stress constitutive matrix.
Eigen::Matrix3d plane_stress_matrix(const Material& material);

// Throws SingularSystemError when the constraints leave a rigid-body mode of
// `mesh` free.
SparseSystem assemble(const Mesh& mesh, const Material& material, const LoadCase& loads);
SparseSystem assemble(const Mesh& mesh, const Material& material, const BoundarySpec& bcs);

struct SolverOptions {
  double tolerance = 1e-12;
  // Iteration cap as a multiple of the reduced dimension.
  int max_iteration_factor = 20;
  // Required true relative residual after convergence.
  double acceptance = 1e-10;
};

// Jacobi-preconditioned conjugate gradients on the reduced system; returns
// the full displacement vector including prescribed values.
Eigen::VectorXd solve(const SparseSystem& system, const SolverOptions& options = {});

// Reaction forces K u - f, nonzero only at constrained dofs.
Eigen::VectorXd reactions(const SparseSystem& system, const Eigen::VectorXd& u);

// Per-element stress D B u_e averaged to nodes with area weights.
std::vector<Stress> recover_stress(const Mesh& mesh, const Eigen::VectorXd& displacement,
                                   const Material& material);

FemSolution solve_sample(const Mesh& mesh, const Material& material, const BoundarySpec& bcs);

}  // namespace meshgnn
