#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "airbeam/autodiff/checkpoint.hpp"
#include "airbeam/common/parallel.hpp"
#include "airbeam/exp/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitMissingCheckpoint = 3;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool eval_only = false;
  std::string checkpoint;
  std::string out;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "experiment file (YAML)")->required();
  cmd->add_option("--seed", a.seed, "overrides the seed of the config");
  cmd->add_flag("--eval-only", a.eval_only, "load checkpoints instead of training");
  cmd->add_option("--checkpoint", a.checkpoint, "checkpoint directory, or a file for a single-model experiment");
  cmd->add_option("--out", a.out, "results CSV (overrides output.results_csv)");
}

int execute(const std::string& command, const Args& a) {
  using namespace airbeam;
  exp::ExperimentConfig cfg;
  try {
    cfg = exp::ExperimentConfig::load(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (!a.out.empty()) cfg.results_csv = a.out;
    if (command == "sweep" && cfg.sweep.axis == exp::SweepAxis::none)
      throw chan::ConfigError("sweep.axis", "the sweep command needs a sweep section");
    cfg.validate();
  } catch (const chan::ConfigError& e) {
    std::fprintf(stderr, "airbeam: invalid config: %s\n", e.what());
    return kExitInvalidConfig;
  }

  exp::RunOptions opts;
  opts.eval_only = a.eval_only || command == "eval";
  if (!a.checkpoint.empty()) opts.checkpoint = a.checkpoint;
  opts.workers = worker_count();
  try {
    const auto rows = exp::run_experiment(cfg, opts);
    exp::write_results(cfg.results_csv, rows);
    std::fprintf(stderr, "airbeam: wrote %zu rows to %s\n", rows.size(), cfg.results_csv.string().c_str());
  } catch (const exp::MissingCheckpoint& e) {
    std::fprintf(stderr, "airbeam: missing checkpoint: %s\n", e.what());
    return kExitMissingCheckpoint;
  } catch (const chan::ConfigError& e) {
    std::fprintf(stderr, "airbeam: invalid config: %s\n", e.what());
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "airbeam: error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"airbeam: learned hybrid beamforming experiments"};
  app.require_subcommand(1);
  Args args;
  std::string command;
  for (const char* name : {"run", "sweep", "eval"}) {
    const char* help = std::string(name) == "run"     ? "train and evaluate every scheme of a config"
                       : std::string(name) == "sweep" ? "like run, but the config must define a sweep"
                                                      : "evaluate from checkpoints, no training";
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, args);
    cmd->callback([&command, name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalidConfig;
  }
  return execute(command, args);
}
