#include "meshgnn/nn.hpp"

#include <cmath>

#include "meshgnn/error.hpp"

namespace meshgnn {

Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  return w;
}

Mlp::Mlp(ParamStore& store, const std::string& name, MlpSpec spec, Rng& init) : spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) throw ConfigError("MLP " + name + " needs at least two widths");
  for (int w : spec_.widths)
    if (w < 1) throw ConfigError("MLP " + name + " has a non-positive width");
  for (std::size_t k = 0; k + 1 < spec_.widths.size(); ++k) {
    const std::string prefix = name + "." + std::to_string(k);
    weights_.push_back(store.add(prefix + ".weight", glorot_uniform(spec_.widths[k], spec_.widths[k + 1], init)));
    biases_.push_back(store.add(prefix + ".bias", Tensor::Zero(1, spec_.widths[k + 1])));
  }
}

Var Mlp::forward(Tape& tape, Var x) const {
  if (tape.value(x).cols() != spec_.widths.front())
    throw ShapeError("MLP input width " + std::to_string(tape.value(x).cols()) + ", expected " +
                     std::to_string(spec_.widths.front()));
  Var h = x;
  for (int k = 0; k < layers(); ++k) {
    h = linear(tape, h, tape.param(weights_[k]), tape.param(biases_[k]));
    if (k + 1 < layers()) h = relu(tape, h);
  }
  return h;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  Tape tape;
  Var v = dropout(tape, tape.constant(x), rate, training, seed);
  return tape.value(v);
}

}  // namespace meshgnn
