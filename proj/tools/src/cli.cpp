#include "meshgnn_cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "meshgnn/dataset.hpp"
#include "meshgnn/error.hpp"
#include "meshgnn/training.hpp"

namespace meshgnn::cli {

namespace {

using nlohmann::json;

struct Options {
  std::string config_path;
  std::string log_level = "info";

  // gen
  std::optional<int> geoms, bcs, jobs;
  std::optional<double> h;
  std::optional<std::uint64_t> seed;
  std::string out_path, from_path, ood;

  // train
  std::optional<std::string> model, target;
  std::optional<std::string> data_path, out_dir;
  std::optional<int> epochs, batch;
  std::optional<double> lr_min, lr_max;
  std::optional<std::uint64_t> init_seed, shuffle_seed, data_seed;
  bool resume = false;

  // eval
  std::string ckpt_path, split_name = "test", per_sample_path;
  bool ground_truth = false;
  std::uint64_t ood_seed = 7;
};

// Config file values first, then explicit flags.
void load_config(const Options& o, GenConfig& gen, RunConfig& run) {
  if (o.config_path.empty()) return;
  std::ifstream in(o.config_path);
  if (!in) throw ConfigError("cannot read config file " + o.config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + o.config_path + " is not valid JSON: " + e.what());
  }
  const auto unknown_run = apply_json(run, j);
  const auto unknown_gen = apply_json(gen, j);
  for (const auto& key : unknown_run)
    if (std::find(unknown_gen.begin(), unknown_gen.end(), key) != unknown_gen.end())
      throw ConfigError("unknown config key '" + key + "' in " + o.config_path);
}

void apply_flags(const Options& o, GenConfig& gen, RunConfig& run) {
  if (o.geoms) gen.n_geoms = *o.geoms;
  if (o.bcs) gen.bcs_per_geom = *o.bcs;
  if (o.h) gen.h = *o.h;
  if (o.seed) gen.seed = *o.seed;
  if (o.jobs) gen.jobs = *o.jobs;
  if (o.model) run.kind = model_kind_from_string(*o.model);
  if (o.target) run.target = target_from_string(*o.target);
  if (o.data_path) run.dataset_path = *o.data_path;
  if (o.out_dir) run.output_dir = *o.out_dir;
  if (o.epochs) run.epochs = *o.epochs;
  if (o.batch) run.batch_size = *o.batch;
  if (o.lr_min) run.lr_min = *o.lr_min;
  if (o.lr_max) run.lr_max = *o.lr_max;
  if (o.init_seed) run.init_seed = *o.init_seed;
  if (o.shuffle_seed) run.shuffle_seed = *o.shuffle_seed;
  if (o.data_seed) run.data_seed = *o.data_seed;
  run.resume = o.resume;
}

int cmd_gen(const Options& o, const GenConfig& gen, std::ostream& out) {
  GenSummary summary;
  std::vector<SampleRecord> records;
  if (!o.from_path.empty()) {
    if (o.ood.empty()) throw ConfigError("--from requires --ood");
    records = make_ood(read_jsonl(o.from_path), ood_variant_from_string(o.ood), gen, gen.seed, &summary);
  } else {
    if (!o.ood.empty()) throw ConfigError("--ood requires --from");
    records = generate_dataset(gen, &summary);
  }
  if (o.out_path.empty()) throw ConfigError("no output path given (--out)");
  write_jsonl(o.out_path, records);
  out << "wrote " << summary.written << " samples to " << o.out_path << " (" << summary.failed
      << " failures skipped)\n";
  if (failure_budget_exceeded(gen, summary)) {
    spdlog::error("{} of {} samples failed, above the budget of {}", summary.failed,
                  summary.written + summary.failed, gen.max_failure_fraction);
    return kGeneration;
  }
  return kOk;
}

int cmd_train(const RunConfig& run, std::ostream& out) {
  if (run.dataset_path.empty()) throw ConfigError("no dataset given (--data)");
  if (run.output_dir.empty()) throw ConfigError("no output directory given (--out)");
  const TrainResult r = train(run);
  out << "epochs " << r.epochs << " train_loss " << r.train_loss << " val_loss " << r.val_loss << " best_epoch "
      << r.best_epoch << "\n";
  return kOk;
}

int cmd_eval(const Options& o, const GenConfig& gen, const RunConfig& run, std::ostream& out) {
  if (!o.data_path) throw ConfigError("no dataset given (--data)");
  Checkpoint ck;
  if (o.ground_truth) {
    ck = ground_truth_checkpoint(run.target);
  } else {
    if (o.ckpt_path.empty()) throw ConfigError("no checkpoint given (--ckpt)");
    ck = load_checkpoint(o.ckpt_path);
  }
  std::vector<SampleRecord> records = read_jsonl(*o.data_path);
  if (records.empty()) throw ConfigError("dataset " + *o.data_path + " is empty");
  std::vector<SampleRecord> part;
  if (o.split_name == "all") {
    part = std::move(records);
  } else {
    const Split s = split(records, ck.ground_truth ? records.front().seed : ck.run.data_seed.value_or(records.front().seed));
    const std::vector<int>* idx = nullptr;
    if (o.split_name == "train") idx = &s.train;
    else if (o.split_name == "val") idx = &s.val;
    else if (o.split_name == "test") idx = &s.test;
    else throw ConfigError("unknown split '" + o.split_name + "' (expected train, val, test or all)");
    for (int i : *idx) part.push_back(std::move(records[i]));
  }
  if (!o.ood.empty()) part = make_ood(part, ood_variant_from_string(o.ood), gen, o.ood_seed);
  const EvalReport report = evaluate(ck, part);
  if (!o.per_sample_path.empty()) write_per_sample_csv(o.per_sample_path, report);
  out << report.to_json().dump() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("meshgnn", sink);
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"Mesh-based graph neural network surrogates for 2D linear elasticity"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off");

  CLI::App* gen = app.add_subcommand("gen", "Generate a dataset (or an OOD copy of one)");
  // --h is the mesh size, so help is long-form only.
  gen->set_help_flag("--help", "Print this help message and exit");
  gen->add_option("--config", o.config_path, "JSON config file; flags override its values");
  gen->add_option("--geoms", o.geoms, "Number of geometries");
  gen->add_option("--bcs", o.bcs, "Boundary-condition variants per geometry");
  gen->add_option("--h", o.h, "Target mesh edge length");
  gen->add_option("--seed", o.seed, "Dataset seed");
  gen->add_option("--jobs", o.jobs, "Worker threads");
  gen->add_option("--out", o.out_path, "Output JSON Lines file")->required();
  gen->add_option("--from", o.from_path, "Source dataset for --ood");
  gen->add_option("--ood", o.ood, "scale-half, scale-double, disconnected-bc or rot-translate");

  CLI::App* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", o.config_path, "JSON config file; flags override its values");
  tr->add_option("--model", o.model, "b, b-sc, ea-gnn or m-gnn");
  tr->add_option("--target", o.target, "disp or stress");
  tr->add_option("--data", o.data_path, "Dataset file");
  tr->add_option("--out", o.out_dir, "Output directory");
  tr->add_option("--epochs", o.epochs, "Epochs");
  tr->add_option("--batch", o.batch, "Graphs per optimizer step");
  tr->add_option("--lr-min", o.lr_min, "Minimum learning rate");
  tr->add_option("--lr-max", o.lr_max, "Maximum learning rate");
  tr->add_option("--init-seed", o.init_seed, "Parameter initialisation seed");
  tr->add_option("--shuffle-seed", o.shuffle_seed, "Sample order and dropout seed");
  tr->add_option("--data-seed", o.data_seed, "Split seed (defaults to the dataset seed)");
  tr->add_flag("--resume", o.resume, "Continue from the checkpoint in --out");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint; prints a JSON report");
  ev->add_option("--config", o.config_path, "JSON config file with generation parameters for --ood");
  ev->add_option("--ckpt", o.ckpt_path, "Checkpoint file");
  ev->add_flag("--ground-truth", o.ground_truth, "Use the targets as predictions");
  ev->add_option("--target", o.target, "Target for --ground-truth");
  ev->add_option("--data", o.data_path, "Dataset file");
  ev->add_option("--split", o.split_name, "train, val, test or all");
  ev->add_option("--ood", o.ood, "scale-half, scale-double, disconnected-bc or rot-translate");
  ev->add_option("--ood-seed", o.ood_seed, "Seed for the OOD transformation");
  ev->add_option("--per-sample", o.per_sample_path, "Write per-sample errors to this CSV");
  ev->add_option("--jobs", o.jobs, "Worker threads for OOD regeneration");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfig;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(o.log_level));
    GenConfig gen_config;
    RunConfig run_config;
    load_config(o, gen_config, run_config);
    apply_flags(o, gen_config, run_config);
    if (gen->parsed()) return cmd_gen(o, gen_config, out);
    if (tr->parsed()) return cmd_train(run_config, out);
    return cmd_eval(o, gen_config, run_config, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const GenerationError& e) {
    err << "error: " << e.what() << "\n";
    return kGeneration;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace meshgnn::cli
