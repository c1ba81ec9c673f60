#include <benchmark/benchmark.h>

#include "meshgnn/dataset.hpp"
#include "meshgnn/fem.hpp"
#include "meshgnn/geomesh.hpp"
#include "meshgnn/losses.hpp"
#include "meshgnn/models.hpp"
#include "meshgnn/runtime.hpp"
#include "meshgnn/training.hpp"

namespace {

using namespace meshgnn;

const SampleRecord& sample() {
  static const SampleRecord r = [] {
    GenConfig c;
    c.n_geoms = 1;
    c.bcs_per_geom = 1;
    return generate_dataset(c).front();
  }();
  return r;
}

void BM_Triangulate(benchmark::State& state) {
  const ClosedCurve curve = gen_geometry(3, 8, {0.28, 0.52});
  for (auto _ : state) benchmark::DoNotOptimize(triangulate(curve, 0.1));
}
BENCHMARK(BM_Triangulate)->Unit(benchmark::kMillisecond);

void BM_FemSolve(benchmark::State& state) {
  const SampleRecord& r = sample();
  for (auto _ : state) benchmark::DoNotOptimize(solve_sample(r.mesh, r.material, r.bcs));
  state.counters["nodes"] = r.mesh.node_count();
}
BENCHMARK(BM_FemSolve)->Unit(benchmark::kMillisecond);

void train_step(benchmark::State& state, ModelKind kind) {
  ModelConfig mc;
  mc.kind = kind;
  auto model = make_model(mc, 1);
  const Graph g = prepare_graph(sample(), mc);
  const double s = bc_scale(g.node_feat);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Tape tape(&model->params());
    Var loss = loss_scaled_mae(tape, model->forward(tape, g, true, ++seed), g.displacement, s);
    tape.backward(loss, Tensor::Ones(1, 1));
  }
  state.counters["nodes"] = g.n_nodes;
  state.counters["edges"] = g.edge_count();
}

void BM_EaGnnStep(benchmark::State& state) { train_step(state, ModelKind::ea_gnn_sc); }
BENCHMARK(BM_EaGnnStep)->Unit(benchmark::kMillisecond);

void BM_BaselineStep(benchmark::State& state) { train_step(state, ModelKind::b_sc); }
BENCHMARK(BM_BaselineStep)->Unit(benchmark::kMillisecond);

void BM_MGnnStep(benchmark::State& state) { train_step(state, ModelKind::m_gnn_sc); }
BENCHMARK(BM_MGnnStep)->Unit(benchmark::kMillisecond);

void BM_EaGnnPredict(benchmark::State& state) {
  ModelConfig mc;
  auto model = make_model(mc, 1);
  const Graph g = prepare_graph(sample(), mc);
  for (auto _ : state) benchmark::DoNotOptimize(model->predict(g));
}
BENCHMARK(BM_EaGnnPredict)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  meshgnn::configure_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
