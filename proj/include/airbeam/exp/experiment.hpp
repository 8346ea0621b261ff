#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "airbeam/baselines/baselines.hpp"
#include "airbeam/channel/config.hpp"
#include "airbeam/nets/nets.hpp"
#include "airbeam/training/training.hpp"

namespace airbeam::exp {

enum class SweepAxis { none, snr_db, B, Q, K, Lp, B_phase };

const char* to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct Sweep {
  SweepAxis axis = SweepAxis::none;
  std::vector<double> values;  // integral for every axis except snr_db
};

/// One experiment file. Relative paths are taken relative to the working
/// directory of the process.
struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  chan::SystemConfig system;
  train::TrainConfig train;
  bool full_widths = false;  // the published network widths instead of desk-scale ones
  int conv_c1 = 32;
  int conv_c2 = 64;
  std::vector<base::Scheme> schemes;
  Sweep sweep;
  base::BaselineOptions baselines;
  int eval_realizations = 2048;
  std::filesystem::path results_csv = "results.csv";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path cache_dir;  // empty: no dataset cache

  /// Parses YAML text and validates it; throws chan::ConfigError naming the
  /// offending key as section.key.
  static ExperimentConfig parse(const std::string& yaml_text);
  static ExperimentConfig load(const std::filesystem::path& path);

  void validate() const;
  /// Every field that influences results, one `key: value` per line.
  std::string canonical() const;
  /// Hex FNV-1a of canonical().
  std::string hash() const;

  std::size_t points() const { return sweep.axis == SweepAxis::none ? 1 : sweep.values.size(); }
  /// System config of sweep point i.
  chan::SystemConfig point_config(std::size_t i) const;
  nets::NetworkSpec network_for(const chan::SystemConfig& cfg) const;
};

struct ResultRow {
  std::string scheme;
  double snr_db = 0;
  int Q = 0;
  int B = 0;
  int K = 0;
  chan::IntRange Lp;
  int B_phase = 0;
  double sum_rate_bps_hz = 0;
  int n_realizations = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_clock_s = 0;
};

std::string results_header();
std::string csv_line(const ResultRow& r);
std::string results_csv(const std::vector<ResultRow>& rows);
void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  bool eval_only = false;
  /// A directory replaces the config's checkpoint_dir. A file stands for the
  /// single learned model of the experiment.
  std::optional<std::filesystem::path> checkpoint;
  int workers = 0;  // 0: worker_count()
};

/// A learned model needed by the experiment: which scheme, which sweep
/// point it serves, and how it is obtained.
struct ModelPlan {
  base::Scheme scheme;
  std::string tag;            // "base", "B16", "K3", "Bphase3", ...
  chan::SystemConfig cfg;     // training config, B_phase = 0
  int phase_bits = 0;         // > 0: fine-tuned from the base model of the scheme
  std::string file_stem() const;
};

/// Models in the order they are produced; fine-tuned entries follow their base.
std::vector<ModelPlan> plan_models(const ExperimentConfig& cfg);

/// Trains (or loads) every learned model, evaluates every scheme on every
/// sweep point and returns rows sorted by (point, scheme order).
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Mean rate of a classical scheme over the first n realizations of a test
/// pool; realization i draws its pilot noise from its own stream, and the
/// sum is taken in index order so the result does not depend on `workers`.
double baseline_mean_rate(base::Scheme scheme, const base::BaselineSetup& setup,
                          const std::vector<chan::ChannelRealization>& pool, std::uint64_t seed, int workers);

}  // namespace airbeam::exp
