#include "meshgnn/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "meshgnn/error.hpp"

namespace meshgnn {

LoadCase load_case(const Mesh& mesh, const BoundarySpec& bcs) {
  validate(bcs, mesh);
  LoadCase lc;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const NodeBc& bc = bcs.node_bc[i];
    if (is_dirichlet(bc.kind)) {
      lc.constraints.push_back({2 * i, bc.vector.x()});
      lc.constraints.push_back({2 * i + 1, bc.vector.y()});
    }
  }
  const auto& b = mesh.boundary_nodes;
  const int nb = static_cast<int>(b.size());
  for (int k = 0; k < nb; ++k) {
    const NodeBc& p = bcs.node_bc[b[k]];
    const NodeBc& q = bcs.node_bc[b[(k + 1) % nb]];
    // A boundary edge is loaded when both endpoints carry the same traction.
    if (p.kind == BcKind::neumann && q.kind == BcKind::neumann && p.vector == q.vector) {
      lc.tractions.push_back({b[k], b[(k + 1) % nb], p.vector});
    }
  }
  if (bcs.body_force) {
    const BodyForce f = *bcs.body_force;
    lc.body_force = [f](const Vec2& x) -> Vec2 { return f.contains(x) ? f.density : Vec2::Zero(); };
  }
  return lc;
}

Eigen::SparseMatrix<double> SparseSystem::matrix() const {
  Eigen::SparseMatrix<double> k(dimension, dimension);
  k.setFromTriplets(entries.begin(), entries.end());
  return k;
}

SparseSystem make_system(int dimension, std::vector<Eigen::Triplet<double>> entries,
                         Eigen::VectorXd rhs, const std::vector<DofConstraint>& constraints) {
  SparseSystem sys;
  sys.dimension = dimension;
  sys.entries = std::move(entries);
  sys.rhs = std::move(rhs);

  std::map<int, double> fixed;
  for (const auto& c : constraints) {
    auto [it, inserted] = fixed.emplace(c.dof, c.value);
    if (!inserted && it->second != c.value) {
      throw ConfigError("conflicting Dirichlet values on dof " + std::to_string(c.dof));
    }
  }
  std::vector<int> slot(dimension, -1);
  sys.fixed_values.resize(static_cast<Eigen::Index>(fixed.size()));
  for (const auto& [dof, value] : fixed) {
    sys.fixed_values[static_cast<Eigen::Index>(sys.fixed_dofs.size())] = value;
    sys.fixed_dofs.push_back(dof);
  }
  std::vector<double> prescribed(dimension, 0.0);
  std::vector<bool> is_fixed(dimension, false);
  for (std::size_t k = 0; k < sys.fixed_dofs.size(); ++k) {
    is_fixed[sys.fixed_dofs[k]] = true;
    prescribed[sys.fixed_dofs[k]] = sys.fixed_values[static_cast<Eigen::Index>(k)];
  }
  for (int d = 0; d < dimension; ++d) {
    if (!is_fixed[d]) {
      slot[d] = static_cast<int>(sys.free_dofs.size());
      sys.free_dofs.push_back(d);
    }
  }
  const int nf = static_cast<int>(sys.free_dofs.size());
  sys.reduced_rhs.resize(nf);
  for (int k = 0; k < nf; ++k) sys.reduced_rhs[k] = sys.rhs[sys.free_dofs[k]];
  std::vector<Eigen::Triplet<double>> reduced;
  reduced.reserve(sys.entries.size());
  for (const auto& t : sys.entries) {
    const int r = t.row(), c = t.col();
    if (is_fixed[r]) continue;
    if (is_fixed[c]) {
      sys.reduced_rhs[slot[r]] -= t.value() * prescribed[c];
    } else {
      reduced.emplace_back(slot[r], slot[c], t.value());
    }
  }
  sys.reduced_matrix.resize(nf, nf);
  sys.reduced_matrix.setFromTriplets(reduced.begin(), reduced.end());
  return sys;
}

Eigen::Matrix3d plane_stress_matrix(const Material& m) {
  const double e = m.youngs_modulus, nu = m.poisson_ratio;
  const double c = e / (1.0 - nu * nu);
  Eigen::Matrix3d d;
  d << c, c * nu, 0.0,
       c * nu, c, 0.0,
       0.0, 0.0, c * (1.0 - nu) / 2.0;
  return d;
}

namespace {

// Strain-displacement matrix of a CST element; strain = B * [ux0 uy0 ux1 uy1 ux2 uy2].
Eigen::Matrix<double, 3, 6> strain_matrix(const Vec2& p0, const Vec2& p1, const Vec2& p2, double& area) {
  area = 0.5 * orient2d(p0, p1, p2);
  const double b0 = p1.y() - p2.y(), b1 = p2.y() - p0.y(), b2 = p0.y() - p1.y();
  const double c0 = p2.x() - p1.x(), c1 = p0.x() - p2.x(), c2 = p1.x() - p0.x();
  Eigen::Matrix<double, 3, 6> bm;
  bm << b0, 0, b1, 0, b2, 0,
        0, c0, 0, c1, 0, c2,
        c0, b0, c1, b1, c2, b2;
  return bm / (2.0 * area);
}

void check_rigid_modes(const Mesh& mesh, const std::vector<int>& fixed_dofs) {
  // Rows of the rigid-body basis (x-translation, y-translation, rotation)
  // restricted to constrained dofs must have full rank.
  Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : mesh.nodes) centroid += p;
  centroid /= std::max(1, mesh.node_count());
  double scale = 0.0;
  for (const Vec2& p : mesh.nodes) scale = std::max(scale, (p - centroid).norm());
  scale = std::max(scale, 1e-300);
  for (int dof : fixed_dofs) {
    const Vec2 p = (mesh.nodes[dof / 2] - centroid) / scale;
    Eigen::Vector3d row;
    if (dof % 2 == 0) row << 1.0, 0.0, -p.y();
    else row << 0.0, 1.0, p.x();
    gram += row * row.transpose();
  }
  const char* names[] = {"x-translation", "y-translation", "in-plane rotation"};
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gram);
  if (eig.eigenvalues()[0] > 1e-10 * std::max(1.0, eig.eigenvalues()[2])) return;
  // Name the mode with the largest weight in the null direction.
  const Eigen::Vector3d null = eig.eigenvectors().col(0).cwiseAbs();
  int worst = 0;
  null.maxCoeff(&worst);
  throw SingularSystemError(std::string("stiffness is singular: no Dirichlet constraint removes the ") +
                            names[worst] + " mode");
}

}  // namespace

SparseSystem assemble(const Mesh& mesh, const Material& material, const LoadCase& loads) {
  material.validate();
  const int n = mesh.node_count();
  const int dim = 2 * n;
  const Eigen::Matrix3d d = plane_stress_matrix(material);

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(mesh.triangles.size() * 36);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dim);
  for (const auto& tri : mesh.triangles) {
    const auto& v = tri.v;
    double area = 0.0;
    const auto bm = strain_matrix(mesh.nodes[v[0]], mesh.nodes[v[1]], mesh.nodes[v[2]], area);
    if (!(area > 0.0)) throw MeshError("assemble: degenerate element");
    const Eigen::Matrix<double, 6, 6> ke = area * bm.transpose() * d * bm;
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        entries.emplace_back(2 * v[a / 2] + a % 2, 2 * v[b / 2] + b % 2, ke(a, b));
      }
    }
    if (loads.body_force) {
      const Vec2 c = (mesh.nodes[v[0]] + mesh.nodes[v[1]] + mesh.nodes[v[2]]) / 3.0;
      const Vec2 per_node = loads.body_force(c) * (area / 3.0);
      for (int k = 0; k < 3; ++k) {
        f[2 * v[k]] += per_node.x();
        f[2 * v[k] + 1] += per_node.y();
      }
    }
  }
  for (const auto& t : loads.tractions) {
    const double len = (mesh.nodes[t.b] - mesh.nodes[t.a]).norm();
    const Vec2 half = 0.5 * len * t.traction;
    f[2 * t.a] += half.x();
    f[2 * t.a + 1] += half.y();
    f[2 * t.b] += half.x();
    f[2 * t.b + 1] += half.y();
  }

  SparseSystem sys = make_system(dim, std::move(entries), std::move(f), loads.constraints);
  check_rigid_modes(mesh, sys.fixed_dofs);
  return sys;
}

SparseSystem assemble(const Mesh& mesh, const Material& material, const BoundarySpec& bcs) {
  return assemble(mesh, material, load_case(mesh, bcs));
}

Eigen::VectorXd solve(const SparseSystem& sys, const SolverOptions& opt) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(sys.dimension);
  for (std::size_t k = 0; k < sys.fixed_dofs.size(); ++k) {
    u[sys.fixed_dofs[k]] = sys.fixed_values[static_cast<Eigen::Index>(k)];
  }
  const auto& a = sys.reduced_matrix;
  const Eigen::VectorXd& b = sys.reduced_rhs;
  const Eigen::Index nf = b.size();
  if (nf == 0) return u;
  const double bnorm = b.norm();
  if (bnorm == 0.0) return u;

  Eigen::VectorXd inv_diag(nf);
  for (Eigen::Index i = 0; i < nf; ++i) {
    const double dii = a.coeff(i, i);
    if (!(dii > 0.0)) throw SingularSystemError("solve: non-positive diagonal in reduced stiffness");
    inv_diag[i] = 1.0 / dii;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  Eigen::VectorXd ap(nf);
  double rz = r.dot(z);
  const long max_iter = static_cast<long>(opt.max_iteration_factor) * nf;
  long it = 0;
  for (; it < max_iter && r.norm() > opt.tolerance * bnorm; ++it) {
    ap.noalias() = a * p;
    const double alpha = rz / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  const double residual = (b - a * x).norm() / bnorm;
  if (!(residual < opt.acceptance)) {
    std::ostringstream msg;
    msg << "solve: conjugate gradients stopped after " << it << " iterations with relative residual "
        << residual;
    throw ConvergenceError(msg.str(), residual);
  }
  for (Eigen::Index k = 0; k < nf; ++k) u[sys.free_dofs[k]] = x[k];
  return u;
}

Eigen::VectorXd reactions(const SparseSystem& sys, const Eigen::VectorXd& u) {
  Eigen::VectorXd r = sys.matrix() * u - sys.rhs;
  std::vector<bool> fixed(sys.dimension, false);
  for (int dof : sys.fixed_dofs) fixed[dof] = true;
  for (int d = 0; d < sys.dimension; ++d)
    if (!fixed[d]) r[d] = 0.0;
  return r;
}

std::vector<Stress> recover_stress(const Mesh& mesh, const Eigen::VectorXd& u, const Material& material) {
  if (u.size() != 2 * mesh.node_count()) throw ShapeError("recover_stress: displacement length mismatch");
  const Eigen::Matrix3d d = plane_stress_matrix(material);
  std::vector<Stress> acc(mesh.nodes.size(), Stress::Zero());
  std::vector<double> weight(mesh.nodes.size(), 0.0);
  for (const auto& tri : mesh.triangles) {
    const auto& v = tri.v;
    double area = 0.0;
    const auto bm = strain_matrix(mesh.nodes[v[0]], mesh.nodes[v[1]], mesh.nodes[v[2]], area);
    Eigen::Matrix<double, 6, 1> ue;
    for (int k = 0; k < 3; ++k) {
      ue[2 * k] = u[2 * v[k]];
      ue[2 * k + 1] = u[2 * v[k] + 1];
    }
    const Stress sigma = d * (bm * ue);
    for (int k = 0; k < 3; ++k) {
      acc[v[k]] += area * sigma;
      weight[v[k]] += area;
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (weight[i] > 0.0) acc[i] /= weight[i];
  return acc;
}

FemSolution solve_sample(const Mesh& mesh, const Material& material, const BoundarySpec& bcs) {
  const SparseSystem sys = assemble(mesh, material, bcs);
  const Eigen::VectorXd u = solve(sys);
  FemSolution sol;
  sol.displacement.resize(mesh.nodes.size());
  for (int i = 0; i < mesh.node_count(); ++i) sol.displacement[i] = Vec2(u[2 * i], u[2 * i + 1]);
  sol.stress = recover_stress(mesh, u, material);
  return sol;
}

}  // namespace meshgnn
