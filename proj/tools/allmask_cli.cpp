#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "allmask/checkpoint.hpp"
#include "allmask/config.hpp"
#include "allmask/dataset.hpp"
#include "allmask/metrics.hpp"
#include "allmask/pipeline.hpp"
#include "allmask/train.hpp"

namespace {

using namespace allmask;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string ckpt_path;
  std::uint64_t seed = 0;
  int grid = 0;
  int count = 0;
  int steps = 0;
  int repeats = 0;
  std::string mode;
  bool refine = false;
  bool no_hybrid = false;
  bool no_fusion = false;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* grid_opt = nullptr;
  CLI::Option* count_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* repeats_opt = nullptr;
  CLI::Option* mode_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, const std::string& default_out) {
  cmd->add_option("--config", flags.config_path, "flat key = value config file");
  cmd->add_option("--out", flags.out_dir, "output directory for artifacts")
      ->default_val(default_out);
  flags.seed_opt = cmd->add_option("--seed", flags.seed, "base sample seed");
  flags.grid_opt = cmd->add_option("--grid", flags.grid, "patches per image side");
  flags.count_opt = cmd->add_option("--count", flags.count, "number of samples");
  flags.steps_opt = cmd->add_option("--steps", flags.steps, "optimizer steps");
  flags.repeats_opt = cmd->add_option("--repeats", flags.repeats, "timed benchmark runs");
  flags.mode_opt = cmd->add_option("--mode", flags.mode, "inference paradigm")
                       ->check(CLI::IsMember({"allmask", "nexttoken"}));
  cmd->add_flag("--refine", flags.refine, "region-growing mask refinement");
  cmd->add_flag("--no-hybrid", flags.no_hybrid,
                "ablation: causal attention inside the placeholder block");
  cmd->add_flag("--no-fusion", flags.no_fusion,
                "ablation: mask embeddings without patch features");
}

// Precedence: per-command default, then ALLMASK_SEED, then the config file,
// then explicit command-line flags.
RunConfig resolve_config(const CommonFlags& flags, std::uint64_t default_seed,
                         int default_count) {
  RunConfig config;
  config.seed = default_seed;
  config.count = default_count;
  if (const char* env_seed = std::getenv("ALLMASK_SEED")) {
    config.seed = std::strtoull(env_seed, nullptr, 10);
  }
  if (!flags.config_path.empty()) {
    config.load_file(flags.config_path);
  }
  if (flags.seed_opt->count() > 0) config.seed = flags.seed;
  if (flags.grid_opt->count() > 0) config.grid = flags.grid;
  if (flags.count_opt->count() > 0) config.count = flags.count;
  if (flags.steps_opt->count() > 0) config.steps = flags.steps;
  if (flags.repeats_opt->count() > 0) config.repeats = flags.repeats;
  if (flags.mode_opt->count() > 0) config.mode = flags.mode;
  if (flags.refine) config.refine = true;
  if (flags.no_hybrid) config.no_hybrid = true;
  if (flags.no_fusion) config.no_fusion = true;
  return config;
}

void write_artifact(const std::string& out_dir, const std::string& name,
                    const std::string& content) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/" + name);
  out << content;
}

void echo_config(const RunConfig& config, const std::string& out_dir) {
  std::ostringstream text;
  config.echo(text);
  write_artifact(out_dir, "resolved_config.txt", text.str());
}

AblationFlags ablation_of(const RunConfig& config) {
  AblationFlags ablation;
  ablation.no_fusion = config.no_fusion;
  ablation.no_hybrid = config.no_hybrid;
  return ablation;
}

int cmd_gen_data(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags, 0, 100);
  echo_config(config, flags.out_dir);
  const Vocabulary vocab = make_toy_vocabulary();
  const auto samples =
      make_dataset<float>(config.seed, config.count, {config.grid},
                          config.allow_no_object, vocab, config.data_paradigm(),
                          config.cell_scale);
  std::ostringstream records;
  for (const auto& sample : samples) write_sample_record(records, sample);
  write_artifact(flags.out_dir, "dataset.txt", records.str());
  std::ostringstream summary;
  summary << "samples=" << samples.size() << " grid=" << config.grid
          << " seed=" << config.seed << '\n';
  write_artifact(flags.out_dir, "metrics.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags, 0, 5000);
  echo_config(config, flags.out_dir);
  const Vocabulary vocab = make_toy_vocabulary();
  const ModelConfig model_config = config.to_model_config(vocab);
  const auto data =
      make_dataset<float>(config.seed, config.count, {config.grid},
                          config.allow_no_object, vocab, config.data_paradigm(),
                          config.cell_scale);
  TrainConfig train_config = config.to_train_config();
  std::filesystem::create_directories(flags.out_dir);
  train_config.checkpoint_path =
      flags.ckpt_path.empty() ? flags.out_dir + "/model.ckpt" : flags.ckpt_path;

  const auto outcome = train(init_parameters<float>(model_config), data, train_config,
                             ablation_of(config));
  std::ostringstream curve;
  write_curve_csv(outcome.curve, curve);
  write_artifact(flags.out_dir, "curve.csv", curve.str());
  std::cout << "trained " << train_config.steps << " steps; checkpoint at "
            << train_config.checkpoint_path << '\n'
            << "final l_total=" << outcome.curve.back().l_total << '\n';
  return 0;
}

int cmd_eval(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags, 10000, 1000);
  echo_config(config, flags.out_dir);
  const Vocabulary vocab = make_toy_vocabulary();
  const auto params =
      load_checkpoint<float>(flags.ckpt_path, config.to_model_config(vocab));
  const auto split =
      make_dataset<float>(config.seed, config.count, {config.grid},
                          config.allow_no_object, vocab, Paradigm::kAllMask,
                          config.cell_scale);
  PipelineOptions options;
  options.max_new_tokens = config.max_new_tokens;
  options.refine_tolerance = config.refine_tolerance;
  const EvalMode mode = parse_eval_mode(config.mode, config.refine);
  const auto report = evaluate(params, split, mode, ablation_of(config), options);

  std::ostringstream csv, table;
  write_eval_csv(report, csv);
  write_eval_table(report, table);
  write_artifact(flags.out_dir, "eval.csv", csv.str());
  write_artifact(flags.out_dir, "report.txt", table.str());
  std::cout << table.str();
  return 0;
}

int cmd_bench(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags, 10000, 1);
  echo_config(config, flags.out_dir);
  const Vocabulary vocab = make_toy_vocabulary();
  const auto params =
      load_checkpoint<float>(flags.ckpt_path, config.to_model_config(vocab));
  const auto sample =
      make_sample<float>(config.seed, config.grid, false, vocab, Paradigm::kAllMask,
                         config.cell_scale);
  PipelineOptions options;
  options.max_new_tokens = config.max_new_tokens;
  options.refine_tolerance = config.refine_tolerance;
  const EvalMode mode = parse_eval_mode(config.mode, config.refine);
  const auto stats = benchmark(params, sample, config.repeats, mode, options);
  std::ostringstream csv;
  write_bench_csv(stats, csv);
  write_artifact(flags.out_dir, "bench.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_demo(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags, 10000, 1);
  echo_config(config, flags.out_dir);
  const Vocabulary vocab = make_toy_vocabulary();
  const auto params =
      load_checkpoint<float>(flags.ckpt_path, config.to_model_config(vocab));
  const auto sample =
      make_sample<float>(config.seed, config.grid, config.allow_no_object, vocab,
                         Paradigm::kAllMask, config.cell_scale);
  PipelineOptions options;
  options.max_new_tokens = config.max_new_tokens;
  options.refine = config.refine;
  options.refine_tolerance = config.refine_tolerance;
  options.ablation = ablation_of(config);
  const auto result =
      run_pipeline(params, sample.instruction, sample.pixels, config.grid, options);

  std::ostringstream text;
  text << "instruction: " << vocab.to_text(sample.instruction) << '\n'
       << format_pipeline_result(result, vocab, config.grid);
  write_artifact(flags.out_dir, "demo.txt", text.str());
  std::cout << text.str();
  return 0;
}

const char* error_category(const std::exception& error) {
  if (dynamic_cast<const config_error*>(&error)) return "config-error";
  if (dynamic_cast<const format_error*>(&error)) return "format-error";
  if (dynamic_cast<const capacity_error*>(&error)) return "capacity-error";
  if (dynamic_cast<const encoding_error*>(&error)) return "encoding-error";
  if (dynamic_cast<const std::invalid_argument*>(&error)) return "invalid-argument";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"all-mask referring segmentation toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, bench_flags, demo_flags;

  auto* gen = app.add_subcommand("gen-data", "generate and serialize a dataset");
  add_common_flags(gen, gen_flags, "runs/gen-data");

  auto* train_cmd = app.add_subcommand("train", "train a model on synthetic data");
  add_common_flags(train_cmd, train_flags, "runs/train");
  train_cmd->add_option("--ckpt", train_flags.ckpt_path, "checkpoint output path");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a val split");
  add_common_flags(eval_cmd, eval_flags, "runs/eval");
  eval_cmd->add_option("--ckpt", eval_flags.ckpt_path, "checkpoint to evaluate")
      ->required();

  auto* bench_cmd = app.add_subcommand("bench", "wall-clock benchmark of one sample");
  add_common_flags(bench_cmd, bench_flags, "runs/bench");
  bench_cmd->add_option("--ckpt", bench_flags.ckpt_path, "checkpoint to benchmark")
      ->required();

  auto* demo_cmd = app.add_subcommand("demo", "run one sample and print the masks");
  add_common_flags(demo_cmd, demo_flags, "runs/demo");
  demo_cmd->add_option("--ckpt", demo_flags.ckpt_path, "checkpoint to run")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags);
    if (bench_cmd->parsed()) return cmd_bench(bench_flags);
    if (demo_cmd->parsed()) return cmd_demo(demo_flags);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error_category(error) << ": " << error.what() << '\n';
    return 1;
  }
  return 0;
}
