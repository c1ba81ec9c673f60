#include <cmath>
#include <numbers>
#include <string>

#include "meshgnn/error.hpp"
#include "meshgnn/nn.hpp"
#include "meshgnn/tensor.hpp"

namespace meshgnn {

ParamId ParamStore::add(std::string name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Entry e;
  e.name = std::move(name);
  e.grad = Tensor::Zero(init.rows(), init.cols());
  e.m = Tensor::Zero(init.rows(), init.cols());
  e.v = Tensor::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return ParamId{static_cast<int>(entries_.size()) - 1};
}

bool ParamStore::contains(std::string_view name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return true;
  return false;
}

ParamId ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return ParamId{static_cast<int>(i)};
  throw ConfigError("unknown parameter: " + std::string(name));
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.grad.setZero(e.value.rows(), e.value.cols());
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void adam_step(ParamStore& params, const AdamOptions& o) {
  const long t = params.step() + 1;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (int i = 0; i < params.size(); ++i) {
    ParamId id{i};
    auto p = params.value(id).array();
    const auto g = params.grad(id).array();
    auto m = params.first_moment(id).array();
    auto v = params.second_moment(id).array();
    if (o.weight_decay != 0.0) p -= o.lr * o.weight_decay * p;
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    p -= o.lr * (m / c1) / ((v / c2).sqrt() + o.eps);
  }
  params.set_step(t);
}

double cosine_warm_restart_lr(const LrSchedule& s, long step) {
  if (s.period < 1 || s.multiplier < 1) throw ConfigError("schedule period and multiplier must be >= 1");
  if (!(s.lr_min > 0.0) || s.lr_min > s.lr_max) throw ConfigError("schedule requires 0 < lr_min <= lr_max");
  if (step < 0) throw ConfigError("schedule step must be >= 0");
  long t = step;
  long cycle = s.period;
  while (t >= cycle) {
    t -= cycle;
    cycle *= s.multiplier;
  }
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(cycle);
  return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(phase));
}

}  // namespace meshgnn
