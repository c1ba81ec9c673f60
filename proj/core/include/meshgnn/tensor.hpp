#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace meshgnn {

// Dense row-major float64 matrix; every tensor in the model code is 2-D
// (rows = nodes or edges, columns = features).
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamId {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Named trainable tensors with their gradients and Adam moments.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor init);
  // Throws ConfigError if absent.
  ParamId find(std::string_view name) const;
  bool contains(std::string_view name) const;

  int size() const { return static_cast<int>(entries_.size()); }
  const std::string& name(ParamId id) const { return entries_[id.index].name; }
  Tensor& value(ParamId id) { return entries_[id.index].value; }
  const Tensor& value(ParamId id) const { return entries_[id.index].value; }
  Tensor& grad(ParamId id) { return entries_[id.index].grad; }
  const Tensor& grad(ParamId id) const { return entries_[id.index].grad; }
  Tensor& first_moment(ParamId id) { return entries_[id.index].m; }
  Tensor& second_moment(ParamId id) { return entries_[id.index].v; }
  const Tensor& first_moment(ParamId id) const { return entries_[id.index].m; }
  const Tensor& second_moment(ParamId id) const { return entries_[id.index].v; }

  long step() const { return step_; }
  void set_step(long step) { step_ = step; }

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  struct Entry {
    std::string name;
    Tensor value, grad, m, v;
  };
  std::vector<Entry> entries_;
  long step_ = 0;
};

}  // namespace meshgnn
