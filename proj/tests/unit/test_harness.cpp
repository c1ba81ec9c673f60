#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "meshgnn/base64.hpp"
#include "meshgnn/dataset.hpp"
#include "meshgnn/error.hpp"
#include "meshgnn/losses.hpp"
#include "meshgnn/training.hpp"

using namespace meshgnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("meshgnn-harness-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GenConfig small_gen(int geoms, int bcs, std::uint64_t seed = 3) {
  GenConfig g;
  g.n_geoms = geoms;
  g.bcs_per_geom = bcs;
  g.h = 0.15;
  g.seed = seed;
  return g;
}

std::string as_jsonl(const std::vector<SampleRecord>& records) {
  std::ostringstream out;
  write_jsonl(out, records);
  return out.str();
}

}  // namespace

TEST_CASE("scaled loss with hand sums") {
  const std::vector<double> dirichlet{0.5, -0.3}, neumann{1.2, 0.03};
  Tensor pred(2, 2), target(2, 2);
  pred << 1, 2, 0, 0;
  target << 0, 0, 0, 1;
  // s = 0.8 + 1.23, mean |pred - target| = 4 / 4.
  CHECK(std::abs(loss_scaled_mae(pred, target, dirichlet, neumann) - 2.03) < 1e-12);
  target(1, 1) = 0.0;
  CHECK(std::abs(loss_scaled_mae(pred, target, dirichlet, neumann) - 2.03 * 0.75) < 1e-12);
  CHECK(std::abs(loss_scaled_mae(pred, target, {}, {}) - 0.75) < 1e-12);
  CHECK(bc_scale(std::vector<double>{0.0}, std::vector<double>{0.0}) == 1.0);
  // Doubling errors doubles the loss; doubling boundary data doubles it too.
  const std::vector<double> d2{1.0, -0.6}, n2{2.4, 0.06};
  CHECK(std::abs(loss_scaled_mae(pred, target, d2, n2) - 2.0 * loss_scaled_mae(pred, target, dirichlet, neumann)) <
        1e-12);
  Tape tape;
  const Var v = loss_scaled_mae(tape, tape.constant(pred), target, 2.03);
  CHECK(std::abs(tape.value(v)(0, 0) - 2.03 * 0.75) < 1e-12);
}

TEST_CASE("scale read from node features") {
  Tensor f = Tensor::Zero(3, kNodeFeatures);
  f(0, nf::dirichlet_nonhom) = 1;
  f(0, nf::bc_x) = 0.5;
  f(0, nf::bc_y) = -0.3;
  f(1, nf::neumann) = 1;
  f(1, nf::bc_x) = 1.2;
  f(1, nf::bc_y) = 0.03;
  f(2, nf::dirichlet_hom) = 1;
  CHECK(std::abs(bc_scale(f) - 2.03) < 1e-12);
  CHECK(bc_scale(Tensor::Zero(2, kNodeFeatures)) == 1.0);
}

TEST_CASE("mean squared error by hand") {
  Tensor pred(1, 2), target(1, 2);
  pred << 1, 2;
  target << 0, 0;
  CHECK(std::abs(loss_mse(pred, target) - 2.5) < 1e-12);
  Tensor p3(3, 1), t3(3, 1);
  p3 << 1, -1, 3;
  t3 << 0, 1, 0;
  CHECK(std::abs(loss_mse(p3, t3) - 14.0 / 3.0) < 1e-12);
  Tape tape;
  CHECK(std::abs(tape.value(loss_mse(tape, tape.constant(pred), target))(0, 0) - 2.5) < 1e-12);
}

TEST_CASE("relative error is homogeneous") {
  const std::vector<double> truth{1.0, -2.0, 0.5, 3.0};
  std::vector<double> pred;
  for (double t : truth) pred.push_back(1.1 * t);
  CHECK(std::abs(relative_error(pred, truth) - 0.1) < 1e-12);
  const std::vector<double> mixed{1.1, -1.8, 0.55, 2.7};  // errors 0.1, 0.2, 0.05, 0.3 over 6.5
  CHECK(std::abs(relative_error(mixed, truth) - 0.65 / 6.5) < 1e-12);
  CHECK(relative_error(truth, truth) == 0.0);
  CHECK_THROWS_AS(relative_error(truth, std::vector<double>(4, 0.0)), Error);
}

TEST_CASE("base64 payloads") {
  const std::vector<std::uint8_t> bytes{'M', 'a', 'n'};
  CHECK(base64::encode(bytes) == "TWFu");
  CHECK(base64::encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
  CHECK(base64::encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
  CHECK(base64::decode("TWFu") == bytes);
  CHECK_THROWS_AS(base64::decode("TW*u"), ConfigError);
  // 1.0 is 0x3FF0000000000000, stored little-endian.
  CHECK(base64::encode_doubles(std::vector<double>{1.0}) == "AAAAAAAA8D8=");
  const std::vector<double> v{0.1, -0.0, 1e-310, 6.02e23, std::numeric_limits<double>::infinity()};
  const std::vector<double> back = base64::decode_doubles(base64::encode_doubles(v));
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::memcmp(&back[i], &v[i], sizeof(double)) == 0);
}

TEST_CASE("generated rows: count, determinism and exact Dirichlet values") {
  GenSummary summary;
  const auto records = generate_dataset(small_gen(2, 3), &summary);
  CHECK(summary.written + summary.failed == 6);
  CHECK(static_cast<int>(records.size()) == summary.written);
  CHECK(summary.written >= 5);
  CHECK(as_jsonl(records) == as_jsonl(generate_dataset(small_gen(2, 3))));
  GenConfig threaded = small_gen(2, 3);
  threaded.jobs = 2;
  CHECK(as_jsonl(records) == as_jsonl(generate_dataset(threaded)));
  CHECK(as_jsonl(records) != as_jsonl(generate_dataset(small_gen(2, 3, 4))));
  for (const SampleRecord& r : records) {
    CHECK(r.sample_id == "g" + std::to_string(r.geom_id) + "-b" + std::to_string(r.variant));
    for (std::size_t i = 0; i < r.mesh.nodes.size(); ++i) {
      const NodeBc& bc = r.bcs.node_bc[i];
      if (is_dirichlet(bc.kind)) CHECK(r.solution.displacement[i] == bc.vector);
    }
  }
}

TEST_CASE("JSON Lines round trip is bit-exact") {
  const auto records = generate_dataset(small_gen(2, 2));
  const std::string text = as_jsonl(records);
  std::istringstream in(text);
  const auto back = read_jsonl(in);
  REQUIRE(back.size() == records.size());
  CHECK(as_jsonl(back) == text);
  for (std::size_t k = 0; k < records.size(); ++k) {
    CHECK(back[k].mesh.nodes == records[k].mesh.nodes);
    CHECK(back[k].solution.displacement == records[k].solution.displacement);
    CHECK(back[k].solution.stress == records[k].solution.stress);
    CHECK(back[k].transform.rotation == records[k].transform.rotation);
  }
  const auto j = nlohmann::json::parse(text.substr(0, text.find('\n')));
  for (const char* key : {"sample_id", "geom_id", "seed", "nodes", "triangles", "boundary", "bc", "body_force",
                          "material", "displacement", "stress", "transform"})
    CHECK_MESSAGE(j.contains(key), key);
  std::istringstream bad(text.substr(0, text.find('\n') + 1) + "{not json\n");
  try {
    read_jsonl(bad);
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("split by geometry") {
  const auto parts = partition_geometries({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 5);
  CHECK(parts[0].size() == 7);
  CHECK(parts[1].size() == 1);
  CHECK(parts[2].size() == 2);
  std::set<int> all;
  for (const auto& p : parts) all.insert(p.begin(), p.end());
  CHECK(all.size() == 10);
  CHECK(partition_geometries({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 5) == parts);

  std::vector<SampleRecord> records;
  for (int g = 0; g < 20; ++g)
    for (int b = 0; b < 3; ++b) {
      SampleRecord r;
      r.geom_id = g;
      r.variant = b;
      records.push_back(r);
    }
  const Split s = split(records, 11);
  CHECK(s.train.size() == 42);
  CHECK(s.val.size() == 6);
  CHECK(s.test.size() == 12);
  std::set<int> seen;
  std::array<std::set<int>, 3> geoms;
  int part = 0;
  for (const auto* idx : {&s.train, &s.val, &s.test}) {
    for (int i : *idx) {
      CHECK(seen.insert(i).second);
      geoms[part].insert(records[i].geom_id);
    }
    ++part;
  }
  CHECK(seen.size() == records.size());
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int g : geoms[a]) CHECK(geoms[b].count(g) == 0);
  CHECK(split(records, 11).test == s.test);
  CHECK(split(records, 12).test != s.test);
}

TEST_CASE("OOD variants") {
  const GenConfig base = small_gen(4, 1, 7);
  const auto records = generate_dataset(base);
  REQUIRE(records.size() >= 3);

  SUBCASE("doubling the domain quadruples the node count") {
    const auto big = make_ood(records, OodVariant::scale_double, base, 1);
    REQUIRE(big.size() == records.size());
    double base_nodes = 0, big_nodes = 0;
    for (std::size_t k = 0; k < records.size(); ++k) {
      base_nodes += static_cast<double>(records[k].mesh.nodes.size());
      big_nodes += static_cast<double>(big[k].mesh.nodes.size());
    }
    CHECK(big_nodes / base_nodes == doctest::Approx(4.0).epsilon(0.3));
    const auto small = make_ood(records, OodVariant::scale_half, base, 1);
    for (std::size_t k = 0; k < small.size(); ++k) CHECK(small[k].mesh.nodes.size() < records[k].mesh.nodes.size());
  }
  SUBCASE("disconnected boundary conditions come in two runs") {
    for (const SampleRecord& r : make_ood(records, OodVariant::disconnected_bc, base, 2)) {
      CHECK(count_boundary_runs(r.mesh, r.bcs, [](BcKind k) { return is_dirichlet(k); }) == 2);
      CHECK(count_boundary_runs(r.mesh, r.bcs, [](BcKind k) { return k == BcKind::neumann; }) == 2);
    }
  }
  SUBCASE("rigid motion leaves simulation-frame features unchanged") {
    const auto moved = make_ood(records, OodVariant::rot_translate, base, 3);
    REQUIRE(moved.size() == records.size());
    ModelConfig mc;
    mc.a_perc = 0.0;
    for (std::size_t k = 0; k < records.size(); ++k) {
      CHECK(moved[k].mesh.nodes[0] != records[k].mesh.nodes[0]);
      const Graph a = prepare_graph(records[k], mc), b = prepare_graph(moved[k], mc);
      CHECK(meshgnn::testing::max_abs_diff(a.node_feat, b.node_feat) < 1e-8);
      CHECK(meshgnn::testing::max_abs_diff(a.edge_feat, b.edge_feat) < 1e-8);
      CHECK(meshgnn::testing::max_abs_diff(a.displacement, b.displacement) < 1e-8);
    }
  }
}

TEST_CASE("config JSON rejects unknown keys and wrong types") {
  RunConfig rc;
  const auto unknown = apply_json(rc, nlohmann::json{{"epochs", 7}, {"modle", "b"}});
  CHECK(rc.epochs == 7);
  CHECK(unknown == std::vector<std::string>{"modle"});
  CHECK_THROWS_AS(apply_json(rc, nlohmann::json{{"epochs", "seven"}}), ConfigError);
  RunConfig back;
  apply_json(back, to_json(rc));
  CHECK(to_json(back) == to_json(rc));
}

TEST_CASE("training writes metrics, checkpoints and resumes exactly") {
  const auto records = generate_dataset(small_gen(3, 2, 9));
  const std::vector<SampleRecord> train_set(records.begin(), records.begin() + 4);
  const std::vector<SampleRecord> val_set(records.begin() + 4, records.end());
  RunConfig rc;
  rc.epochs = 1;
  rc.output_dir = scratch("one").string();
  train(rc, train_set, val_set);
  const std::string csv = slurp(fs::path(rc.output_dir) / "metrics.csv");
  std::istringstream lines(csv);
  std::string comment, header, row, extra;
  std::getline(lines, comment);
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(comment.rfind("# ", 0) == 0);
  CHECK(comment.find("loss=scaled_mae") != std::string::npos);
  CHECK(header == "epoch,lr,train_loss,val_loss");
  CHECK(std::count(row.begin(), row.end(), ',') == 3);
  CHECK_FALSE(std::getline(lines, extra));

  RunConfig full = rc;
  full.epochs = 3;
  full.output_dir = scratch("full").string();
  const TrainResult a = train(full, train_set, val_set);
  RunConfig part = full;
  part.epochs = 2;
  part.output_dir = scratch("part").string();
  train(part, train_set, val_set);
  part.epochs = 3;
  part.resume = true;
  const TrainResult b = train(part, train_set, val_set);
  CHECK(b.epochs == 3);
  CHECK(a.train_loss == b.train_loss);
  CHECK(slurp(fs::path(full.output_dir) / "metrics.csv") == slurp(fs::path(part.output_dir) / "metrics.csv"));
  // Identical apart from the output directory echoed in the run config.
  auto without_out = [](const fs::path& p) {
    auto j = nlohmann::json::parse(slurp(p));
    j["run"].erase("out");
    return j;
  };
  CHECK(without_out(fs::path(full.output_dir) / "checkpoint.json") ==
        without_out(fs::path(part.output_dir) / "checkpoint.json"));

  const Checkpoint ck = load_checkpoint((fs::path(full.output_dir) / "checkpoint.json").string());
  CHECK(ck.best_epoch >= 1);
  auto model = instantiate(ck);
  const auto exported = export_params(model->params());
  REQUIRE(exported.size() == ck.params.size());
  for (std::size_t i = 0; i < exported.size(); ++i) CHECK(exported[i].value == ck.params[i].value);
  const fs::path again = fs::path(full.output_dir) / "again.json";
  save_checkpoint(again.string(), ck);
  CHECK(slurp(again) == slurp(fs::path(full.output_dir) / "checkpoint.json"));

  RunConfig mse = rc;
  mse.kind = ModelKind::b;
  mse.output_dir = scratch("mse").string();
  train(mse, train_set, val_set);
  CHECK(slurp(fs::path(mse.output_dir) / "metrics.csv").find("loss=mse") != std::string::npos);
}

TEST_CASE("overfitting one sample lowers the loss and beats the untrained model") {
  const SampleRecord sample = meshgnn::testing::random_sample(5, 0.15);
  const std::vector<SampleRecord> repeated(4, sample);
  RunConfig rc;
  rc.epochs = 50;
  rc.lr_min = 1e-3;
  rc.lr_max = 1e-3;
  rc.dropout = 0.0;
  rc.output_dir = scratch("overfit").string();
  const TrainResult r = train(rc, repeated, {});
  std::istringstream csv(slurp(fs::path(rc.output_dir) / "metrics.csv"));
  std::string line;
  std::vector<double> losses;
  while (std::getline(csv, line))
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0])))
      losses.push_back(std::stod(line.substr(line.find(',', line.find(',') + 1) + 1)));
  REQUIRE(losses.size() == 50);
  CHECK(losses.back() < 0.5 * losses.front());
  CHECK(r.train_loss == losses.back());

  const Checkpoint trained = load_checkpoint((fs::path(rc.output_dir) / "checkpoint.json").string());
  Checkpoint untrained = trained;
  untrained.params = export_params(make_model(trained.model, 99)->params());
  const EvalReport t = evaluate(trained, {sample}), u = evaluate(untrained, {sample});
  CHECK(t.errors[0] < u.errors[0]);
  CHECK(t.errors[1] < u.errors[1]);
}

TEST_CASE("evaluation reports") {
  const auto records = generate_dataset(small_gen(2, 2, 13));
  const EvalReport gt = evaluate(ground_truth_checkpoint(Target::displacement), records);
  CHECK(gt.errors == std::vector<double>{0.0, 0.0});
  CHECK(gt.samples.size() == records.size());
  const auto j = gt.to_json();
  CHECK(j.size() == 2);
  CHECK(j.contains("e_ux"));
  CHECK(j.contains("e_uy"));
  const EvalReport st = evaluate(ground_truth_checkpoint(Target::stress), records);
  CHECK(st.to_json().size() == 3);
  for (const char* key : {"e_sxx", "e_syy", "e_sxy"}) CHECK(st.to_json().at(key) == 0.0);
  CHECK_THROWS_AS(evaluate(ground_truth_checkpoint(Target::displacement), {}), ConfigError);

  // Pooled over nodes: sum of per-node errors over sum of reference magnitudes.
  Checkpoint ck;
  ck.model.kind = ModelKind::b_sc;
  ck.params = export_params(make_model(ck.model, 3)->params());
  const EvalReport rep = evaluate(ck, records);
  auto model = instantiate(ck);
  double num = 0, den = 0;
  for (const SampleRecord& r : records) {
    const Graph g = prepare_graph(r, ck.model);
    const Tensor y = model->predict(g);
    num += (y.col(0) - g.displacement.col(0)).cwiseAbs().sum();
    den += g.displacement.col(0).cwiseAbs().sum();
  }
  CHECK(rep.errors[0] == doctest::Approx(num / den).epsilon(1e-12));

  const fs::path csv = scratch("eval") / "per_sample.csv";
  write_per_sample_csv(csv.string(), rep);
  std::istringstream in(slurp(csv));
  std::string header;
  std::getline(in, header);
  CHECK(header == "sample_id,n_nodes,e_ux,e_uy");
}
