#include "fixtures.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "meshgnn/rng.hpp"

namespace meshgnn::testing {

Mesh grid_mesh(int nx, int ny, double spacing) {
  Mesh mesh;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) mesh.nodes.emplace_back(i * spacing, j * spacing);
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      mesh.triangles.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1)}});
      mesh.triangles.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1)}});
    }
  }
  for (int i = 0; i < nx - 1; ++i) mesh.boundary_nodes.push_back(id(i, 0));
  for (int j = 0; j < ny - 1; ++j) mesh.boundary_nodes.push_back(id(nx - 1, j));
  for (int i = nx - 1; i > 0; --i) mesh.boundary_nodes.push_back(id(i, ny - 1));
  for (int j = ny - 1; j > 0; --j) mesh.boundary_nodes.push_back(id(0, j));
  mesh.char_length = spacing;
  validate(mesh);
  return mesh;
}

Mesh unit_square_mesh(double h) {
  const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  return triangulate(polygon_curve(square), h);
}

namespace {

SampleRecord solved(Mesh mesh, std::uint64_t seed, std::string id) {
  SampleRecord r;
  r.sample_id = std::move(id);
  r.seed = seed;
  r.mesh = std::move(mesh);
  r.bcs = assign_bcs(r.mesh, seed);
  r.solution = solve_sample(r.mesh, r.material, r.bcs);
  r.transform = to_simulation_coords(r.mesh.nodes).transform;
  return r;
}

}  // namespace

LoadCase uniaxial_tension(const Mesh& m) {
  LoadCase lc;
  int corner = -1;
  for (int i = 0; i < m.node_count(); ++i) {
    if (m.nodes[i].x() == 0.0) {
      lc.constraints.push_back({2 * i, 0.0});
      if (m.nodes[i].y() == 0.0) corner = i;
    }
  }
  if (corner < 0) throw std::invalid_argument("mesh has no node at the origin");
  lc.constraints.push_back({2 * corner + 1, 0.0});
  const auto& b = m.boundary_nodes;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const int p = b[k], q = b[(k + 1) % b.size()];
    if (m.nodes[p].x() == 1.0 && m.nodes[q].x() == 1.0) lc.tractions.push_back({p, q, Vec2(1.0, 0.0)});
  }
  return lc;
}

SampleRecord random_sample(std::uint64_t seed, double h) {
  const ClosedCurve curve = gen_geometry(seed, 8, {0.28, 0.52});
  return solved(triangulate(curve, h), seed, "g" + std::to_string(seed) + "-b0");
}

SampleRecord grid_sample(int nx, int ny, std::uint64_t seed) {
  return solved(grid_mesh(nx, ny, 0.1), seed, "grid-b0");
}

EdgeList random_edges(int n, double p, std::uint64_t seed) {
  Rng rng(seed);
  EdgeList edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) {
        edges.push_back({i, j});
        edges.push_back({j, i});
      }
  std::sort(edges.begin(), edges.end());
  return edges;
}

GradientCheck gradient_check(Model& model, const Graph& graph, int n_checked, std::uint64_t seed, double step,
                             double floor, int max_attempts) {
  ParamStore& params = model.params();
  Rng rng(seed);
  const int out_cols = output_width(model.config().target);
  Tensor weight(graph.n_nodes, out_cols);
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = rng.normal();

  struct Eval {
    double loss;
    std::uint64_t signature;
  };
  auto evaluate = [&]() {
    Tape tape(static_cast<const ParamStore*>(&params));
    tape.set_branch_tracking(true);
    const Tensor& y = tape.value(model.forward(tape, graph, false, 0));
    return Eval{y.cwiseProduct(weight).sum(), tape.branch_signature()};
  };

  params.zero_grad();
  std::uint64_t base_signature;
  {
    Tape tape(&params);
    tape.set_branch_tracking(true);
    Var y = model.forward(tape, graph, false, 0);
    base_signature = tape.branch_signature();
    tape.backward(y, weight);
  }

  // Cumulative sizes so parameters are drawn uniformly over scalars.
  std::vector<long> offsets{0};
  for (int i = 0; i < params.size(); ++i) offsets.push_back(offsets.back() + params.value(ParamId{i}).size());
  GradientCheck result;
  for (int k = 0; k < max_attempts && result.checked < n_checked; ++k) {
    const long flat = static_cast<long>(rng.index(static_cast<std::size_t>(offsets.back())));
    const int which = static_cast<int>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    const ParamId id{which};
    double& slot = params.value(id).data()[flat - offsets[which]];
    const double analytic = params.grad(id).data()[flat - offsets[which]];
    const double saved = slot;
    // Central differences at h and h/2, combined by Richardson extrapolation
    // so the O(h^2) truncation term cancels.
    bool same_branch = true;
    auto central = [&](double h) {
      slot = saved + h;
      const Eval plus = evaluate();
      slot = saved - h;
      const Eval minus = evaluate();
      slot = saved;
      same_branch = same_branch && plus.signature == base_signature && minus.signature == base_signature;
      return (plus.loss - minus.loss) / (2.0 * h);
    };
    const double coarse = central(step), fine = central(step / 2);
    if (!same_branch) {
      ++result.skipped;
      continue;
    }
    const double numeric = (4.0 * fine - coarse) / 3.0;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  }
  params.zero_grad();
  return result;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace meshgnn::testing
