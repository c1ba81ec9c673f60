#include <doctest.h>

#include <cmath>
#include <functional>

#include "meshgnn/error.hpp"
#include "meshgnn/nn.hpp"
#include "meshgnn/rng.hpp"
#include "meshgnn/tape.hpp"

using namespace meshgnn;

namespace {

Tensor random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

// Keeps entries at least `gap` away from zero so kinks stay out of reach of
// the finite-difference step.
Tensor away_from_zero(Tensor t, double gap) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return t;
}

using ScalarFn = std::function<Var(Tape&, std::vector<Var>&)>;

// Max relative error between backward() and central differences over every
// entry of every input.
double gradient_error(const ScalarFn& f, std::vector<Tensor> inputs, double step = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& x : inputs) vars.push_back(tape.input(x));
  Var out = f(tape, vars);
  REQUIRE(tape.value(out).size() == 1);
  tape.backward(out, Tensor::Ones(1, 1));
  std::vector<Tensor> analytic;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const Tensor& g = tape.grad(vars[k]);
    analytic.push_back(g.size() == 0 ? Tensor::Zero(inputs[k].rows(), inputs[k].cols()) : g);
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Var> vs;
    for (const Tensor& x : xs) vs.push_back(t.constant(x));
    return t.value(f(t, vs))(0, 0);
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k].data()[i] += step;
      minus[k].data()[i] -= step;
      const double fd = (eval(plus) - eval(minus)) / (2.0 * step);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1.0});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  return worst;
}

// Hand-rolled dense forward pass used as an oracle for Mlp.
Eigen::MatrixXd reference_mlp(const ParamStore& store, const Mlp& mlp, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = x;
  for (int k = 0; k < mlp.layers(); ++k) {
    const Tensor& w = store.value(mlp.weight(k));
    const Tensor& b = store.value(mlp.bias(k));
    Eigen::MatrixXd next(h.rows(), w.cols());
    for (int r = 0; r < h.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) {
        double acc = b(0, c);
        for (int j = 0; j < w.rows(); ++j) acc += h(r, j) * w(j, c);
        next(r, c) = (k + 1 < mlp.layers()) ? std::max(acc, 0.0) : acc;
      }
    h = next;
  }
  return h;
}

}  // namespace

TEST_CASE("zero MLP outputs zeros") {
  ParamStore store;
  Rng rng(1);
  Mlp mlp(store, "m", MlpSpec{{3, 4, 2}}, rng);
  for (int i = 0; i < store.size(); ++i) store.value(ParamId{i}).setZero();
  Tape tape(&store);
  Var y = mlp.forward(tape, tape.constant(random_tensor(5, 3, rng)));
  CHECK(tape.value(y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(tape.value(y).rows() == 5);
  CHECK(tape.value(y).cols() == 2);
}

TEST_CASE("identity MLP passes nonnegative input through") {
  ParamStore store;
  Rng rng(2);
  Mlp mlp(store, "id", MlpSpec{{4, 4, 4}}, rng);
  for (int k = 0; k < 2; ++k) {
    store.value(mlp.weight(k)) = Tensor::Identity(4, 4);
    store.value(mlp.bias(k)).setZero();
  }
  const Tensor x = random_tensor(6, 4, rng).cwiseAbs();
  Tape tape(&store);
  CHECK(tape.value(mlp.forward(tape, tape.constant(x))) == x);
}

TEST_CASE("random MLP matches a hand-rolled forward pass") {
  ParamStore store;
  Rng rng(3);
  Mlp mlp(store, "r", MlpSpec{{3, 5, 2}}, rng);
  for (int i = 0; i < store.size(); ++i) store.value(ParamId{i}) = random_tensor(
      store.value(ParamId{i}).rows(), store.value(ParamId{i}).cols(), rng);
  const Tensor x = random_tensor(7, 3, rng);
  Tape tape(&store);
  const Tensor y = tape.value(mlp.forward(tape, tape.constant(x)));
  const Eigen::MatrixXd expected = reference_mlp(store, mlp, x);
  CHECK((y - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("MLP registers named parameters with Glorot bounds") {
  ParamStore store;
  Rng rng(4);
  Mlp mlp(store, "enc", MlpSpec{{14, 64, 128}}, rng);
  CHECK(store.size() == 4);
  CHECK(store.contains("enc.0.weight"));
  CHECK(store.contains("enc.1.bias"));
  CHECK(store.parameter_count() == 14 * 64 + 64 + 64 * 128 + 128);
  const double bound = std::sqrt(6.0 / (14 + 64));
  const Tensor& w = store.value(store.find("enc.0.weight"));
  CHECK(w.rows() == 14);
  CHECK(w.cols() == 64);
  CHECK(w.cwiseAbs().maxCoeff() <= bound);
  CHECK(w.cwiseAbs().maxCoeff() > 0.8 * bound);
  CHECK(store.value(store.find("enc.0.bias")).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(Mlp(store, "enc", MlpSpec{{2, 2}}, rng), ConfigError);
  CHECK_THROWS_AS(store.find("missing"), ConfigError);
}

TEST_CASE("MLP input width is checked") {
  ParamStore store;
  Rng rng(5);
  Mlp mlp(store, "m", MlpSpec{{3, 4, 2}}, rng);
  Tape tape(&store);
  CHECK_THROWS_AS(mlp.forward(tape, tape.constant(Tensor::Ones(2, 4))), ShapeError);
}

TEST_CASE("gradient of sum(W x) is the outer product structure") {
  ParamStore store;
  Rng rng(6);
  const ParamId w = store.add("w", random_tensor(3, 4, rng));
  const Tensor x = random_tensor(5, 3, rng);
  Tape tape(&store);
  Var y = sum(tape, matmul(tape, tape.constant(x), tape.param(w)));
  tape.backward(y, Tensor::Ones(1, 1));
  // d/dW_jk sum_rk (x W)_rk = sum_r x_rj.
  const Tensor& g = store.grad(w);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 4; ++k) CHECK(g(j, k) == doctest::Approx(x.col(j).sum()).epsilon(1e-14));
}

TEST_CASE("zero output gradient leaves every gradient zero") {
  ParamStore store;
  Rng rng(7);
  Mlp mlp(store, "m", MlpSpec{{3, 6, 2}}, rng);
  Tape tape(&store);
  Var x = tape.input(random_tensor(4, 3, rng));
  Var y = mlp.forward(tape, x);
  tape.backward(y, Tensor::Zero(4, 2));
  for (int i = 0; i < store.size(); ++i) CHECK(store.grad(ParamId{i}).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tape.grad(x).size() == 0 || tape.grad(x).cwiseAbs().maxCoeff() == 0.0));
}

TEST_CASE("a consumed tape cannot be reused") {
  Tape tape;
  Var x = tape.input(Tensor::Ones(2, 2));
  Var s = sum(tape, x);
  tape.backward(s, Tensor::Ones(1, 1));
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(s, Tensor::Ones(1, 1)), Error);
  CHECK_THROWS_AS(sum(tape, x), Error);
}

TEST_CASE("read-only tapes refuse to write parameter gradients") {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::Ones(2, 2));
  const ParamStore& view = store;
  Tape tape(&view);
  Var y = sum(tape, tape.param(w));
  CHECK(tape.value(y)(0, 0) == 4.0);
  CHECK_THROWS_AS(tape.backward(y, Tensor::Ones(1, 1)), Error);
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::Ones(1, 3));
  for (int rep = 0; rep < 2; ++rep) {
    Tape tape(&store);
    Var p = tape.param(w);
    CHECK(tape.param(w).id == p.id);
    tape.backward(sum(tape, add(tape, p, p)), Tensor::Ones(1, 1));
  }
  CHECK(store.grad(w) == Tensor::Constant(1, 3, 4.0));
  store.zero_grad();
  CHECK(store.grad(w) == Tensor::Zero(1, 3));
}

TEST_CASE("elementwise and linear ops pass the finite-difference check") {
  Rng rng(8);
  const Tensor a = random_tensor(4, 3, rng), b = random_tensor(4, 3, rng);
  const Tensor w = random_tensor(3, 5, rng), row = random_tensor(1, 5, rng);
  const Tensor weights = random_tensor(1, 3, rng);
  auto check = [](const ScalarFn& f, std::vector<Tensor> in) { CHECK(gradient_error(f, std::move(in)) < 1e-8); };
  check([](Tape& t, auto& v) { return sum(t, matmul(t, v[0], v[1])); }, {a, w});
  check([](Tape& t, auto& v) { return sum(t, tanh(t, linear(t, v[0], v[1], v[2]))); }, {a, w, row});
  check([](Tape& t, auto& v) { return sum(t, sigmoid(t, add(t, v[0], v[1]))); }, {a, b});
  check([](Tape& t, auto& v) { return sum(t, tanh(t, scale(t, v[0], -2.5))); }, {a});
  check([](Tape& t, auto& v) { return sum(t, relu(t, v[0])); }, {away_from_zero(a, 1e-3)});
  check([](Tape& t, auto& v) { return sum(t, tanh(t, add_row(t, v[0], v[1]))); }, {a, weights});
  check([](Tape& t, auto& v) { return sum(t, tanh(t, concat_cols(t, v[0], v[1]))); }, {a, b});
  check([](Tape& t, auto& v) { return sum(t, tanh(t, matmul_rows(t, v[0], v[1], 2))); },
        {random_tensor(4, 2, rng), random_tensor(6, 3, rng)});
  check([](Tape& t, auto& v) { return mean_squared_error(t, tanh(t, v[0]), Tensor::Ones(4, 3)); }, {a});
  check([](Tape& t, auto& v) { return mean_abs_error(t, v[0], Tensor::Zero(4, 3)); }, {away_from_zero(a, 1e-3)});
}

TEST_CASE("graph ops pass the finite-difference check") {
  Rng rng(9);
  const std::vector<int> index{0, 2, 2, 1, 0, 3};
  const Tensor x = random_tensor(4, 3, rng), e = random_tensor(6, 3, rng);
  const std::vector<double> mask{1.0, 0.0, 0.5, 2.0};
  const std::vector<int> kept{1, 3};
  auto check = [](const ScalarFn& f, std::vector<Tensor> in) { CHECK(gradient_error(f, std::move(in)) < 1e-8); };
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, gather_rows(t, v[0], index))); }, {x});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, scatter_sum(t, v[0], index, 5))); }, {e});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, scatter_mean(t, v[0], index, 4))); }, {e});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, scale_rows(t, v[0], v[1]))); }, {x, random_tensor(4, 1, rng)});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, mask_rows(t, v[0], mask))); }, {x});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, scalar_projection(t, v[0], v[1]))); },
        {x, random_tensor(1, 3, rng)});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, restore_rows(t, v[0], v[1], kept))); },
        {random_tensor(2, 3, rng), x});
  check([&](Tape& t, auto& v) { return sum(t, tanh(t, dropout(t, v[0], 0.3, true, 17))); }, {x});
}

TEST_CASE("scatter rows without sources are zero") {
  Tape tape;
  const std::vector<int> index{0, 0};
  Var x = tape.constant(Tensor::Ones(2, 2));
  const Tensor m = tape.value(scatter_mean(tape, x, index, 3));
  CHECK(m.row(0) == Tensor::Ones(1, 2));
  CHECK(m.row(1) == Tensor::Zero(1, 2));
  CHECK(tape.value(scatter_sum(tape, x, index, 3)).row(0) == Tensor::Constant(1, 2, 2.0));
  const std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(scatter_sum(tape, x, bad, 3), ShapeError);
  CHECK_THROWS_AS(add(tape, x, tape.constant(Tensor::Ones(3, 2))), ShapeError);
}

TEST_CASE("branch signature tracks ReLU masks only when enabled") {
  auto signature = [](double shift, bool track) {
    Tape tape;
    tape.set_branch_tracking(track);
    Tensor x(1, 3);
    x << -1.0 + shift, 0.5, 2.0;
    relu(tape, tape.constant(x));
    return tape.branch_signature();
  };
  CHECK(signature(0.0, true) == signature(0.5, true));
  CHECK(signature(0.0, true) != signature(1.5, true));
  CHECK(signature(0.0, false) == signature(1.5, false));
}

TEST_CASE("Adam leaves parameters alone without gradient or decay") {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::Constant(2, 2, 0.7));
  AdamOptions o;
  o.lr = 0.1;
  for (int i = 0; i < 3; ++i) adam_step(store, o);
  CHECK(store.value(w) == Tensor::Constant(2, 2, 0.7));
  CHECK(store.step() == 3);
}

TEST_CASE("Adam follows the hand recursion for a constant gradient") {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::Constant(1, 1, 1.0));
  AdamOptions o;
  o.lr = 0.01;
  const double g = 0.5;
  double p = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    store.grad(w)(0, 0) = g;
    adam_step(store, o);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    p -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(store.value(w)(0, 0) == doctest::Approx(p).epsilon(1e-14));
  }
  // With a constant gradient the bias-corrected step is lr * g / (|g| + eps).
  CHECK(store.value(w)(0, 0) == doctest::Approx(1.0 - 3 * 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("decoupled weight decay shrinks geometrically") {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::Constant(1, 2, 2.0));
  AdamOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.01;
  for (int i = 0; i < 5; ++i) adam_step(store, o);
  CHECK(store.value(w)(0, 0) == doctest::Approx(2.0 * std::pow(1.0 - 0.001, 5)).epsilon(1e-14));
}

TEST_CASE("cosine schedule with warm restarts") {
  const LrSchedule s{1e-4, 1.5e-4, 10, 2};
  CHECK(cosine_warm_restart_lr(s, 0) == doctest::Approx(1.5e-4).epsilon(1e-15));
  CHECK(cosine_warm_restart_lr(s, 5) == doctest::Approx(1.25e-4).epsilon(1e-12));
  CHECK(cosine_warm_restart_lr(s, 10) == doctest::Approx(1.5e-4).epsilon(1e-15));
  // Second cycle lasts 20 steps, so its midpoint is step 20 and it restarts at 30.
  CHECK(cosine_warm_restart_lr(s, 20) == doctest::Approx(1.25e-4).epsilon(1e-12));
  CHECK(cosine_warm_restart_lr(s, 30) == doctest::Approx(1.5e-4).epsilon(1e-15));
  for (long step = 0; step < 100; ++step) {
    const double lr = cosine_warm_restart_lr(s, step);
    CHECK(lr >= 1e-4);
    CHECK(lr <= 1.5e-4);
  }
  CHECK(cosine_warm_restart_lr(s, 9) < cosine_warm_restart_lr(s, 8));
  CHECK_THROWS_AS(cosine_warm_restart_lr({2e-4, 1e-4, 10, 2}, 0), ConfigError);
}

TEST_CASE("dropout is the identity outside training and at rate zero") {
  Rng rng(10);
  const Tensor x = random_tensor(5, 5, rng);
  CHECK(dropout(x, 0.1, false, 3) == x);
  CHECK(dropout(x, 0.0, true, 3) == x);
  CHECK_THROWS_AS(dropout(x, 1.0, true, 3), ConfigError);
}

TEST_CASE("inverted dropout keeps the expected value") {
  const Tensor x = Tensor::Ones(1000, 1000);
  const Tensor y = dropout(x, 0.1, true, 12);
  const double survivors = static_cast<double>((y.array() != 0.0).count()) / y.size();
  CHECK(survivors >= 0.897);
  CHECK(survivors <= 0.903);
  CHECK(std::abs(y.mean() - 1.0) < 0.005);
  CHECK(y.maxCoeff() == doctest::Approx(1.0 / 0.9));
  CHECK(dropout(x, 0.1, true, 12) == y);
  CHECK(dropout(x, 0.1, true, 13) != y);
}

TEST_CASE("seed mixing is deterministic and spreads bits") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(1, 2, 3) == mix_seed(mix_seed(1, 2), 3));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(6);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) mean += c.normal();
  CHECK(std::abs(mean / 100000) < 0.02);
}
