#include "meshgnn/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "meshgnn/base64.hpp"
#include "meshgnn/error.hpp"
#include "meshgnn/losses.hpp"
#include "meshgnn/rng.hpp"

namespace meshgnn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t { kAugment = 11, kShuffle = 12, kDropout = 13 };

constexpr int kCheckpointVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001B3ULL;
  return h;
}

// Key table used by apply_json: each entry copies one JSON value into a config.
template <typename Config>
using Setter = std::function<void(Config&, const json&)>;

template <typename Config>
std::vector<std::string> apply(Config& config, const json& j, const std::map<std::string, Setter<Config>>& table) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) {
      unknown.push_back(key);
      continue;
    }
    try {
      it->second(config, value);
    } catch (const json::exception& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    }
  }
  return unknown;
}

json model_to_json(const ModelConfig& m) {
  return {{"kind", to_string(m.kind)}, {"target", to_string(m.target)}, {"latent", m.latent},
          {"hidden", m.hidden},        {"gn_blocks", m.gn_blocks},      {"a_perc", m.a_perc},
          {"dropout", m.dropout},      {"depth", m.depth},              {"ratio", m.ratio},
          {"power", m.power},          {"output_scale", m.output_scale}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  m.target = target_from_string(j.at("target").get<std::string>());
  m.latent = j.at("latent").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.gn_blocks = j.at("gn_blocks").get<int>();
  m.a_perc = j.at("a_perc").get<double>();
  m.dropout = j.at("dropout").get<double>();
  m.depth = j.at("depth").get<int>();
  m.ratio = j.at("ratio").get<double>();
  m.power = j.at("power").get<int>();
  if (j.contains("output_scale")) m.output_scale = j.at("output_scale").get<std::vector<double>>();
  return m;
}

json tensors_to_json(const std::vector<NamedTensor>& ts) {
  json out = json::array();
  for (const NamedTensor& t : ts)
    out.push_back({{"name", t.name},
                   {"shape", {t.value.rows(), t.value.cols()}},
                   {"data", base64::encode_doubles(std::span<const double>(t.value.data(), t.value.size()))}});
  return out;
}

std::vector<NamedTensor> tensors_from_json(const json& j) {
  std::vector<NamedTensor> out;
  for (const json& e : j) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    const auto rows = e.at("shape").at(0).get<Eigen::Index>();
    const auto cols = e.at("shape").at(1).get<Eigen::Index>();
    const std::vector<double> data = base64::decode_doubles(e.at("data").get<std::string>());
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw ConfigError("parameter " + t.name + " payload does not match its shape");
    t.value = Eigen::Map<const Tensor>(data.data(), rows, cols);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> export_moments(const ParamStore& p, bool first) {
  std::vector<NamedTensor> out;
  for (int i = 0; i < p.size(); ++i)
    out.push_back({p.name({i}), first ? p.first_moment({i}) : p.second_moment({i})});
  return out;
}

void import_moments(ParamStore& p, const std::vector<NamedTensor>& values, bool first) {
  for (const NamedTensor& t : values) {
    Tensor& dst = first ? p.first_moment(p.find(t.name)) : p.second_moment(p.find(t.name));
    if (dst.rows() != t.value.rows() || dst.cols() != t.value.cols())
      throw ConfigError("optimizer state for " + t.name + " has the wrong shape");
    dst = t.value;
  }
}

std::string csv_row(int epoch, double lr, double train_loss, double val_loss) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g", epoch, lr, train_loss, val_loss);
  return buf;
}

void write_file_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ConfigError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string metrics_text(const RunConfig& rc, const std::vector<std::string>& rows) {
  std::string text = std::string("# model=") + to_string(rc.kind) + " target=" + to_string(rc.target) +
                     " loss=" + (traits(rc.kind).mse_loss ? "mse" : "scaled_mae") + "\n";
  text += "epoch,lr,train_loss,val_loss\n";
  for (const std::string& r : rows) text += r + "\n";
  return text;
}

struct Prepared {
  std::vector<Graph> graphs;
  std::vector<double> scale;
  std::vector<std::string> ids;
};

Prepared prepare_all(const std::vector<SampleRecord>& records, const ModelConfig& mc) {
  Prepared p;
  for (const SampleRecord& r : records) {
    p.graphs.push_back(prepare_graph(r, mc));
    p.scale.push_back(bc_scale(p.graphs.back().node_feat));
    p.ids.push_back(r.sample_id);
  }
  return p;
}

Var sample_loss(Tape& tape, Var pred, const Graph& g, double scale_factor, const ModelConfig& mc) {
  const Tensor& target = g.target(mc.target);
  if (target.size() == 0) throw ConfigError("sample has no target values");
  return traits(mc.kind).mse_loss ? loss_mse(tape, pred, target) : loss_scaled_mae(tape, pred, target, scale_factor);
}

void validate(const RunConfig& rc) {
  if (rc.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (rc.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (rc.weight_decay.value_or(0.0) < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (rc.dropout < 0.0 || rc.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  const LrRange lr = default_lr_range(rc.kind);
  const double lo = rc.lr_min.value_or(lr.lr_min), hi = rc.lr_max.value_or(lr.lr_max);
  if (!(lo > 0.0) || lo > hi) throw ConfigError("learning rates require 0 < lr_min <= lr_max");
}

}  // namespace

const char* to_string(Target t) { return t == Target::displacement ? "disp" : "stress"; }

Target target_from_string(const std::string& s) {
  if (s == "disp" || s == "displacement") return Target::displacement;
  if (s == "stress") return Target::stress;
  throw ConfigError("unknown target '" + s + "' (expected disp or stress)");
}

LrRange default_lr_range(ModelKind kind) {
  if (kind == ModelKind::m_gnn_sc) return {2e-3, 3e-3};
  return {1e-4, 1.5e-4};
}

double default_weight_decay(ModelKind kind) { return kind == ModelKind::m_gnn_sc ? 1e-6 : 1e-5; }

std::vector<double> target_rms(const std::vector<Graph>& graphs, Target target) {
  const int w = output_width(target);
  std::vector<double> sum(w, 0.0);
  double count = 0.0;
  for (const Graph& g : graphs) {
    const Tensor& y = g.target(target);
    if (y.cols() != w) throw ShapeError("target width does not match");
    for (int c = 0; c < w; ++c) sum[c] += y.col(c).squaredNorm();
    count += static_cast<double>(y.rows());
  }
  for (double& s : sum) s = std::max(count > 0.0 ? std::sqrt(s / count) : 1.0, 1e-12);
  return sum;
}

ModelConfig model_config(const RunConfig& rc) {
  ModelConfig m;
  m.kind = rc.kind;
  m.target = rc.target;
  m.a_perc = traits(rc.kind).augment ? rc.a_perc : 0.0;
  m.dropout = rc.dropout;
  m.depth = rc.depth;
  m.ratio = rc.ratio;
  m.power = rc.power;
  return m;
}

json to_json(const RunConfig& c) {
  json j = {{"model", to_string(c.kind)},
            {"target", to_string(c.target)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay.value_or(default_weight_decay(c.kind))},
            {"normalize_targets", c.normalize_targets},
            {"a_perc", c.a_perc},
            {"r", c.ratio},
            {"d", c.depth},
            {"l", c.power},
            {"dropout", c.dropout},
            {"init_seed", c.init_seed},
            {"shuffle_seed", c.shuffle_seed},
            {"data", c.dataset_path},
            {"out", c.output_dir}};
  const LrRange lr = default_lr_range(c.kind);
  j["lr_min"] = c.lr_min.value_or(lr.lr_min);
  j["lr_max"] = c.lr_max.value_or(lr.lr_max);
  if (c.data_seed) j["data_seed"] = *c.data_seed;
  return j;
}

json to_json(const GenConfig& c) {
  return {{"geoms", c.n_geoms},
          {"bcs", c.bcs_per_geom},
          {"h", c.h},
          {"n_ctrl", c.n_ctrl},
          {"radius_min", c.radius.lo},
          {"radius_max", c.radius.hi},
          {"E", c.material.youngs_modulus},
          {"nu", c.material.poisson_ratio},
          {"seed", c.seed},
          {"jitter_sigma", c.jitter_sigma},
          {"jitter_fraction", c.jitter_fraction},
          {"max_failure_fraction", c.max_failure_fraction},
          {"jobs", c.jobs}};
}

std::vector<std::string> apply_json(RunConfig& config, const json& j) {
  static const std::map<std::string, Setter<RunConfig>> table{
      {"model", [](RunConfig& c, const json& v) { c.kind = model_kind_from_string(v.get<std::string>()); }},
      {"target", [](RunConfig& c, const json& v) { c.target = target_from_string(v.get<std::string>()); }},
      {"epochs", [](RunConfig& c, const json& v) { c.epochs = v.get<int>(); }},
      {"batch_size", [](RunConfig& c, const json& v) { c.batch_size = v.get<int>(); }},
      {"lr_min", [](RunConfig& c, const json& v) { c.lr_min = v.get<double>(); }},
      {"lr_max", [](RunConfig& c, const json& v) { c.lr_max = v.get<double>(); }},
      {"weight_decay", [](RunConfig& c, const json& v) { c.weight_decay = v.get<double>(); }},
      {"a_perc", [](RunConfig& c, const json& v) { c.a_perc = v.get<double>(); }},
      {"r", [](RunConfig& c, const json& v) { c.ratio = v.get<double>(); }},
      {"d", [](RunConfig& c, const json& v) { c.depth = v.get<int>(); }},
      {"l", [](RunConfig& c, const json& v) { c.power = v.get<int>(); }},
      {"dropout", [](RunConfig& c, const json& v) { c.dropout = v.get<double>(); }},
      {"normalize_targets", [](RunConfig& c, const json& v) { c.normalize_targets = v.get<bool>(); }},
      {"data_seed", [](RunConfig& c, const json& v) { c.data_seed = v.get<std::uint64_t>(); }},
      {"init_seed", [](RunConfig& c, const json& v) { c.init_seed = v.get<std::uint64_t>(); }},
      {"shuffle_seed", [](RunConfig& c, const json& v) { c.shuffle_seed = v.get<std::uint64_t>(); }},
      {"data", [](RunConfig& c, const json& v) { c.dataset_path = v.get<std::string>(); }},
      {"out", [](RunConfig& c, const json& v) { c.output_dir = v.get<std::string>(); }},
  };
  return apply(config, j, table);
}

std::vector<std::string> apply_json(GenConfig& config, const json& j) {
  static const std::map<std::string, Setter<GenConfig>> table{
      {"geoms", [](GenConfig& c, const json& v) { c.n_geoms = v.get<int>(); }},
      {"bcs", [](GenConfig& c, const json& v) { c.bcs_per_geom = v.get<int>(); }},
      {"h", [](GenConfig& c, const json& v) { c.h = v.get<double>(); }},
      {"n_ctrl", [](GenConfig& c, const json& v) { c.n_ctrl = v.get<int>(); }},
      {"radius_min", [](GenConfig& c, const json& v) { c.radius.lo = v.get<double>(); }},
      {"radius_max", [](GenConfig& c, const json& v) { c.radius.hi = v.get<double>(); }},
      {"E", [](GenConfig& c, const json& v) { c.material.youngs_modulus = v.get<double>(); }},
      {"nu", [](GenConfig& c, const json& v) { c.material.poisson_ratio = v.get<double>(); }},
      {"seed", [](GenConfig& c, const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"jitter_sigma", [](GenConfig& c, const json& v) { c.jitter_sigma = v.get<double>(); }},
      {"jitter_fraction", [](GenConfig& c, const json& v) { c.jitter_fraction = v.get<double>(); }},
      {"max_failure_fraction", [](GenConfig& c, const json& v) { c.max_failure_fraction = v.get<double>(); }},
      {"jobs", [](GenConfig& c, const json& v) { c.jobs = v.get<int>(); }},
  };
  return apply(config, j, table);
}

Graph prepare_graph(const SampleRecord& r, const ModelConfig& mc) {
  const KindTraits tr = traits(mc.kind);
  const FrameTransform frame = tr.simulation_coords ? r.transform : FrameTransform::identity();
  Graph g = mesh_to_graph(r.mesh, r.bcs, r.solution, frame);
  if (tr.augment && mc.a_perc > 0.0) g = augment_edges(g, mc.a_perc, mix_seed(fnv1a(r.sample_id), kAugment));
  return g;
}

std::vector<NamedTensor> export_params(const ParamStore& p) {
  std::vector<NamedTensor> out;
  for (int i = 0; i < p.size(); ++i) out.push_back({p.name({i}), p.value({i})});
  return out;
}

void import_params(ParamStore& p, const std::vector<NamedTensor>& values) {
  if (static_cast<int>(values.size()) != p.size())
    throw ConfigError("checkpoint holds " + std::to_string(values.size()) + " tensors, model has " +
                      std::to_string(p.size()));
  for (const NamedTensor& t : values) {
    Tensor& dst = p.value(p.find(t.name));
    if (dst.rows() != t.value.rows() || dst.cols() != t.value.cols())
      throw ConfigError("parameter " + t.name + " has the wrong shape");
    dst = t.value;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json j = {{"format_version", kCheckpointVersion}, {"kind", ck.ground_truth ? "ground-truth" : "model"}};
  j["model"] = model_to_json(ck.model);
  if (!ck.ground_truth) {
    j["run"] = to_json(ck.run);
    j["params"] = tensors_to_json(ck.params);
    j["best_epoch"] = ck.best_epoch;
    j["best_loss"] = ck.best_loss;
    j["rng"] = {{"init_seed", ck.run.init_seed}, {"shuffle_seed", ck.run.shuffle_seed}};
    if (ck.state)
      j["state"] = {{"epoch", ck.state->epoch},
                    {"step", ck.state->step},
                    {"params", tensors_to_json(ck.state->params)},
                    {"adam_m", tensors_to_json(ck.state->first_moment)},
                    {"adam_v", tensors_to_json(ck.state->second_moment)},
                    {"metrics", ck.state->metrics_rows}};
  }
  write_file_atomically(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  try {
    const json j = json::parse(in);
    if (j.at("format_version").get<int>() != kCheckpointVersion)
      throw ConfigError("unsupported checkpoint version in " + path);
    Checkpoint ck;
    ck.model = model_from_json(j.at("model"));
    ck.ground_truth = j.at("kind").get<std::string>() == "ground-truth";
    if (ck.ground_truth) return ck;
    const auto unknown = apply_json(ck.run, j.at("run"));
    if (!unknown.empty()) throw ConfigError("checkpoint run config has unknown key '" + unknown.front() + "'");
    ck.params = tensors_from_json(j.at("params"));
    ck.best_epoch = j.at("best_epoch").get<int>();
    ck.best_loss = j.at("best_loss").get<double>();
    if (j.contains("state")) {
      const json& s = j.at("state");
      TrainState st;
      st.epoch = s.at("epoch").get<int>();
      st.step = s.at("step").get<long>();
      st.params = tensors_from_json(s.at("params"));
      st.first_moment = tensors_from_json(s.at("adam_m"));
      st.second_moment = tensors_from_json(s.at("adam_v"));
      st.metrics_rows = s.at("metrics").get<std::vector<std::string>>();
      ck.state = std::move(st);
    }
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint " + path + ": " + e.what());
  }
}

Checkpoint ground_truth_checkpoint(Target target) {
  Checkpoint ck;
  ck.ground_truth = true;
  ck.model.target = target;
  ck.run.target = target;
  return ck;
}

std::unique_ptr<Model> instantiate(const Checkpoint& ck) {
  if (ck.ground_truth) throw ConfigError("a ground-truth checkpoint has no model");
  auto model = make_model(ck.model, ck.run.init_seed);
  import_params(model->params(), ck.params);
  return model;
}

TrainResult train(const RunConfig& rc, const std::vector<SampleRecord>& train_set,
                  const std::vector<SampleRecord>& val_set) {
  validate(rc);
  if (train_set.empty()) throw ConfigError("training partition is empty");
  if (rc.output_dir.empty()) throw ConfigError("no output directory given");
  fs::create_directories(rc.output_dir);
  const fs::path ckpt_path = fs::path(rc.output_dir) / "checkpoint.json";
  const fs::path csv_path = fs::path(rc.output_dir) / "metrics.csv";

  ModelConfig mc = model_config(rc);
  const Prepared train_data = prepare_all(train_set, mc);
  const Prepared val_data = prepare_all(val_set, mc);
  if (rc.normalize_targets) mc.output_scale = target_rms(train_data.graphs, mc.target);
  auto model = make_model(mc, rc.init_seed);
  ParamStore& params = model->params();
  const int n = static_cast<int>(train_data.graphs.size());
  const int batch = rc.batch_size;
  const long steps_per_epoch = (n + batch - 1) / batch;

  const LrRange lr_default = default_lr_range(rc.kind);
  const LrSchedule schedule{rc.lr_min.value_or(lr_default.lr_min), rc.lr_max.value_or(lr_default.lr_max),
                            steps_per_epoch, 2};
  AdamOptions adam;
  adam.weight_decay = rc.weight_decay.value_or(default_weight_decay(rc.kind));

  Checkpoint ck;
  ck.model = mc;
  ck.run = rc;
  ck.best_loss = std::numeric_limits<double>::infinity();
  ck.params = export_params(params);
  TrainState state;

  if (rc.resume) {
    Checkpoint prev = load_checkpoint(ckpt_path.string());
    if (prev.ground_truth || !prev.state) throw ConfigError("checkpoint in " + rc.output_dir + " cannot be resumed");
    if (prev.model.kind != mc.kind || prev.model.target != mc.target)
      throw ConfigError("resumed checkpoint was trained for a different model or target");
    state = std::move(*prev.state);
    import_params(params, state.params);
    import_moments(params, state.first_moment, true);
    import_moments(params, state.second_moment, false);
    params.set_step(state.step);
    ck.params = std::move(prev.params);
    ck.best_epoch = prev.best_epoch;
    ck.best_loss = prev.best_loss;
  }

  TrainResult result;
  for (int epoch = state.epoch + 1; epoch <= rc.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(mix_seed(rc.shuffle_seed, kShuffle, epoch));
    for (int i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    const double epoch_lr = cosine_warm_restart_lr(schedule, params.step());
    double train_sum = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int bs = std::min(batch, n - start);
      params.zero_grad();
      for (int j = 0; j < bs; ++j) {
        const int idx = order[start + j];
        Tape tape(&params);
        const std::uint64_t drop_seed = mix_seed(mix_seed(rc.shuffle_seed, kDropout, epoch), start + j);
        Var pred = model->forward(tape, train_data.graphs[idx], true, drop_seed);
        Var loss = sample_loss(tape, pred, train_data.graphs[idx], train_data.scale[idx], mc);
        const double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value))
          throw DivergenceError("non-finite training loss on sample " + train_data.ids[idx] + " at epoch " +
                                std::to_string(epoch));
        train_sum += value;
        tape.backward(loss, Tensor::Constant(1, 1, 1.0 / bs));
      }
      adam.lr = cosine_warm_restart_lr(schedule, params.step());
      adam_step(params, adam);
    }
    const double train_loss = train_sum / n;

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val_data.graphs.empty()) {
      double sum = 0.0;
      for (std::size_t i = 0; i < val_data.graphs.size(); ++i) {
        Tape tape(static_cast<const ParamStore*>(&params));
        Var pred = model->forward(tape, val_data.graphs[i], false, 0);
        const double value = tape.value(sample_loss(tape, pred, val_data.graphs[i], val_data.scale[i], mc))(0, 0);
        if (!std::isfinite(value))
          throw DivergenceError("non-finite validation loss on sample " + val_data.ids[i] + " at epoch " +
                                std::to_string(epoch));
        sum += value;
      }
      val_loss = sum / static_cast<double>(val_data.graphs.size());
    }

    const double selection = val_data.graphs.empty() ? train_loss : val_loss;
    if (selection < ck.best_loss) {
      ck.best_loss = selection;
      ck.best_epoch = epoch;
      ck.params = export_params(params);
    }
    state.epoch = epoch;
    state.step = params.step();
    state.metrics_rows.push_back(csv_row(epoch, epoch_lr, train_loss, val_loss));
    state.params = export_params(params);
    state.first_moment = export_moments(params, true);
    state.second_moment = export_moments(params, false);
    ck.state = state;
    save_checkpoint(ckpt_path.string(), ck);
    write_file_atomically(csv_path, metrics_text(rc, state.metrics_rows));
    spdlog::info("{} epoch {}/{} lr {:.3e} train {:.6e} val {:.6e}", to_string(rc.kind), epoch, rc.epochs, epoch_lr,
                 train_loss, val_loss);
    result.train_loss = train_loss;
    result.val_loss = val_loss;
  }
  result.epochs = state.epoch;
  result.best_epoch = ck.best_epoch;
  result.best_loss = ck.best_loss;
  if (!ck.state) save_checkpoint(ckpt_path.string(), ck);
  return result;
}

TrainResult train(const RunConfig& rc) {
  std::vector<SampleRecord> records = read_jsonl(rc.dataset_path);
  if (records.empty()) throw ConfigError("dataset " + rc.dataset_path + " is empty");
  const Split s = split(records, rc.data_seed.value_or(records.front().seed));
  std::vector<SampleRecord> train_set, val_set;
  for (int i : s.train) train_set.push_back(std::move(records[i]));
  for (int i : s.val) val_set.push_back(std::move(records[i]));
  return train(rc, train_set, val_set);
}

std::vector<std::string> component_names(Target t) {
  if (t == Target::displacement) return {"e_ux", "e_uy"};
  return {"e_sxx", "e_syy", "e_sxy"};
}

json EvalReport::to_json() const {
  json j = json::object();
  const auto names = component_names(target);
  for (std::size_t c = 0; c < names.size(); ++c) j[names[c]] = errors[c];
  return j;
}

EvalReport evaluate(const Checkpoint& ck, const std::vector<SampleRecord>& records) {
  if (records.empty()) throw ConfigError("evaluation partition is empty");
  std::unique_ptr<Model> model;
  if (!ck.ground_truth) model = instantiate(ck);
  const int width = output_width(ck.model.target);
  EvalReport report;
  report.target = ck.model.target;
  std::vector<double> num(width, 0.0), den(width, 0.0);
  for (const SampleRecord& r : records) {
    const Graph g = prepare_graph(r, ck.model);
    const Tensor& truth = g.target(ck.model.target);
    const Tensor pred = ck.ground_truth ? truth : model->predict(g);
    SampleError se;
    se.sample_id = r.sample_id;
    se.n_nodes = g.n_nodes;
    for (int c = 0; c < width; ++c) {
      const double a = (pred.col(c) - truth.col(c)).cwiseAbs().sum();
      const double b = truth.col(c).cwiseAbs().sum();
      num[c] += a;
      den[c] += b;
      se.errors.push_back(b > 0.0 ? a / b : std::numeric_limits<double>::quiet_NaN());
    }
    report.samples.push_back(std::move(se));
  }
  for (int c = 0; c < width; ++c) {
    if (den[c] == 0.0) throw Error("reference field " + component_names(ck.model.target)[c] + " is identically zero");
    report.errors.push_back(num[c] / den[c]);
  }
  return report;
}

void write_per_sample_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << "sample_id,n_nodes";
  for (const auto& name : component_names(report.target)) out << ',' << name;
  out << '\n';
  char buf[32];
  for (const SampleError& s : report.samples) {
    out << s.sample_id << ',' << s.n_nodes;
    for (double e : s.errors) {
      std::snprintf(buf, sizeof buf, "%.17g", e);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace meshgnn
