#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "meshgnn/dataset.hpp"
#include "meshgnn/models.hpp"

namespace meshgnn {

const char* to_string(Target target);  // "disp" or "stress"
Target target_from_string(const std::string& s);

struct RunConfig {
  ModelKind kind = ModelKind::ea_gnn_sc;
  Target target = Target::displacement;
  int epochs = 150;
  int batch_size = 4;
  // Unset bounds fall back to default_lr_range(kind).
  std::optional<double> lr_min;
  std::optional<double> lr_max;
  // Unset falls back to default_weight_decay(kind).
  std::optional<double> weight_decay;
  double a_perc = 0.2;
  double ratio = 0.6;
  int depth = 3;
  int power = 3;
  double dropout = 0.1;
  // Scale decoder outputs by the RMS of the training targets.
  bool normalize_targets = true;
  // Split seed; unset means the dataset's own seed.
  std::optional<std::uint64_t> data_seed;
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 1;
  std::string dataset_path;
  std::string output_dir;
  bool resume = false;
};

struct LrRange {
  double lr_min;
  double lr_max;
};

LrRange default_lr_range(ModelKind kind);
double default_weight_decay(ModelKind kind);
ModelConfig model_config(const RunConfig& run);

// Per-component RMS of the graphs' targets, each floored at a tiny positive
// value so an all-zero component keeps a usable scale.
std::vector<double> target_rms(const std::vector<Graph>& graphs, Target target);

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const GenConfig& config);
// Copy recognised keys of `j` onto `config` and return the keys that were not
// recognised. Values of the wrong type throw ConfigError naming the key.
std::vector<std::string> apply_json(RunConfig& config, const nlohmann::json& j);
std::vector<std::string> apply_json(GenConfig& config, const nlohmann::json& j);

// Graph of a record as a model of `config` sees it: simulation or raw frame,
// plus the record's fixed random edge augmentation where the kind uses it.
Graph prepare_graph(const SampleRecord& record, const ModelConfig& config);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Optimiser and bookkeeping needed to continue a run exactly.
struct TrainState {
  int epoch = 0;  // completed epochs
  long step = 0;
  std::vector<NamedTensor> params, first_moment, second_moment;
  std::vector<std::string> metrics_rows;
};

struct Checkpoint {
  bool ground_truth = false;  // echoes targets instead of predicting
  ModelConfig model;
  RunConfig run;
  std::vector<NamedTensor> params;  // best-validation parameters
  int best_epoch = 0;
  double best_loss = 0.0;
  std::optional<TrainState> state;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint ground_truth_checkpoint(Target target);

std::vector<NamedTensor> export_params(const ParamStore& params);
// Overwrites values by name; every stored tensor must exist with equal shape.
void import_params(ParamStore& params, const std::vector<NamedTensor>& values);
std::unique_ptr<Model> instantiate(const Checkpoint& checkpoint);

struct TrainResult {
  int epochs = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  int best_epoch = 0;
  double best_loss = 0.0;
};

// Writes checkpoint.json and metrics.csv under config.output_dir after every
// epoch. Throws DivergenceError on a non-finite loss.
TrainResult train(const RunConfig& config, const std::vector<SampleRecord>& train_set,
                  const std::vector<SampleRecord>& val_set);
// Loads config.dataset_path and trains on its train/val partitions.
TrainResult train(const RunConfig& config);

std::vector<std::string> component_names(Target target);

struct SampleError {
  std::string sample_id;
  int n_nodes = 0;
  std::vector<double> errors;  // NaN where the sample's reference is zero
};

struct EvalReport {
  Target target = Target::displacement;
  std::vector<double> errors;  // per component, over all nodes concatenated
  std::vector<SampleError> samples;

  nlohmann::json to_json() const;
};

// Relative l1 error per output component in the model's own frame. Throws
// ConfigError on an empty record list.
EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<SampleRecord>& records);
void write_per_sample_csv(const std::string& path, const EvalReport& report);

}  // namespace meshgnn
