#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshgnn/rng.hpp"
#include "meshgnn/tape.hpp"

namespace meshgnn {

// Layer widths, input first. Hidden layers use ReLU, the output layer is affine.
struct MlpSpec {
  std::vector<int> widths;
};

// Glorot-uniform weights (in x out) and zero biases.
Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng);

class Mlp {
 public:
  Mlp() = default;
  // Registers "<name>.<k>.weight" and "<name>.<k>.bias" for each layer k.
  Mlp(ParamStore& store, const std::string& name, MlpSpec spec, Rng& init);

  Var forward(Tape& tape, Var x) const;

  const MlpSpec& spec() const { return spec_; }
  int layers() const { return static_cast<int>(weights_.size()); }
  ParamId weight(int layer) const { return weights_[layer]; }
  ParamId bias(int layer) const { return biases_[layer]; }

 private:
  MlpSpec spec_;
  std::vector<ParamId> weights_;
  std::vector<ParamId> biases_;
};

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam with decoupled weight decay (p -= lr * wd * p before the
// moment update). Increments the store's step counter.
void adam_step(ParamStore& params, const AdamOptions& options);

// Cosine annealing with warm restarts: cycle i lasts period * multiplier^i
// steps and anneals from lr_max to lr_min.
struct LrSchedule {
  double lr_min = 1e-4;
  double lr_max = 1.5e-4;
  long period = 1;
  long multiplier = 2;
};

double cosine_warm_restart_lr(const LrSchedule& schedule, long step);

// Stand-alone inverted dropout for tensors outside a tape.
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);

}  // namespace meshgnn
