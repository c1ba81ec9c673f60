#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace meshgnn {

// Derives an independent child seed from (seed, stream) with the splitmix64
// finalizer. Used everywhere a per-sample or per-layer seed is needed so that
// results never depend on evaluation order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

// Deterministic random source. The distributions are implemented here rather
// than taken from <random> so that sequences are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace meshgnn
