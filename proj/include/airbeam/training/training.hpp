#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "airbeam/channel/channel.hpp"
#include "airbeam/nets/nets.hpp"

namespace airbeam::train {

struct DatasetSizes {
  std::int64_t train = 20480;
  std::int64_t val = 2048;
  std::int64_t test = 2048;
  bool operator==(const DatasetSizes&) const = default;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  int batches_per_epoch = 0;  // 0: one pass over the training split
  double lr_initial = 1e-3;
  double lr_decay_factor = 0.3;
  std::vector<int> lr_decay_epochs{50, 75};
  int patience = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double finetune_lr = 0;   // 0: lr_initial / 10
  int finetune_epochs = 0;  // 0: epochs / 4
  bool freeze_noise = false;  // reuse one training-noise draw per sample across epochs
  DatasetSizes sizes;
  std::uint64_t seed = 1;

  /// The published settings: 200 epochs of 200 batches of 1024, decay x0.3
  /// after epochs 100 and 150, 204800/20480/20480 samples.
  static TrainConfig published();

  void validate() const;
  std::string snapshot() const;

  /// Learning rate used during `epoch` (1-based): lr_initial times
  /// lr_decay_factor for every decay epoch strictly before it.
  double lr_at(int epoch) const;
  double effective_finetune_lr() const { return finetune_lr > 0 ? finetune_lr : lr_initial / 10; }
  int effective_finetune_epochs() const { return finetune_epochs > 0 ? finetune_epochs : std::max(1, epochs / 4); }
  bool operator==(const TrainConfig&) const = default;
};

enum class Split : std::uint64_t { train = 1, val = 2, test = 3 };

const char* to_string(Split s);

/// Identity of the RNG stream that draws sample `index` of `split`.
struct StreamId {
  std::uint64_t seed;
  std::uint64_t purpose;
  std::uint64_t split;
  std::uint64_t index;
  bool operator==(const StreamId&) const = default;
};

StreamId channel_stream(std::uint64_t seed, Split split, std::int64_t index);

struct Dataset {
  std::vector<chan::ChannelRealization> train;
  std::vector<chan::ChannelRealization> val;
  std::vector<chan::ChannelRealization> test;
};

/// Draws `n` samples of one split; sample i comes from its own stream, so the
/// result does not depend on the worker count.
std::vector<chan::ChannelRealization> gen_split(const chan::SystemConfig& cfg, Split split, std::int64_t n,
                                                std::uint64_t seed);
Dataset gen_dataset(const chan::SystemConfig& cfg, const DatasetSizes& sizes, std::uint64_t seed);

/// Like `gen_dataset` but reads/writes the splits under `cache_dir`, keyed
/// by a hash of the config, sizes and seed. An empty dir disables caching.
Dataset cached_dataset(const chan::SystemConfig& cfg, const DatasetSizes& sizes, std::uint64_t seed,
                       const std::filesystem::path& cache_dir);

/// Receiver noise for a batch of samples. Sample i of the batch uses the
/// stream (seed, split, epoch, indices[i]); epoch 0 is the fixed draw used
/// for validation and test.
ad::ComplexPair sample_noise(const nets::Model& model, const std::vector<std::int64_t>& indices, double sigma2,
                             std::uint64_t seed, Split split, std::uint64_t epoch);

/// -mean(R) of one forward pass.
ad::Tensor loss_sum_rate(nets::Model& model, const link::ChannelBatch& ch, const ad::ComplexPair* noise,
                         double sigma2, bool training);

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam with bias correction over every trainable tensor of a store.
class Adam {
 public:
  Adam(ad::ParameterStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the gradients currently stored on the
  /// parameters. Throws NonFiniteError, naming the tensor, before touching
  /// anything if a gradient is NaN or infinite.
  void step(double lr);
  std::int64_t steps() const { return t_; }

 private:
  ad::ParameterStore* store_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Patience-based stopper on a metric that should increase.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  /// Records one epoch; returns true when training should stop.
  bool update(double metric);
  bool last_improved() const { return last_improved_; }
  double best() const { return best_; }

 private:
  int patience_;
  int since_best_ = 0;
  bool seen_ = false;
  bool last_improved_ = false;
  double best_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;
  double val_rate = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based, 0 before any epoch
  double best_val_rate = 0;
  bool stopped_early = false;
  std::string abort_reason;  // non-empty when training hit a non-finite value

  void write_csv(const std::filesystem::path& path) const;
  std::string csv() const;
};

struct TrainOptions {
  /// Writes <dir>/<prefix>_best.ckpt and <prefix>_final.ckpt when non-empty.
  std::filesystem::path checkpoint_dir;
  std::string checkpoint_prefix = "model";
  std::filesystem::path history_csv;
  std::function<void(const EpochRecord&)> on_epoch;
  int eval_batch = 512;
};

/// Trains `model` in place and leaves it holding the parameters of the best
/// validation epoch.
TrainHistory train(nets::Model& model, const Dataset& data, const TrainConfig& tc, const TrainOptions& opts = {});

/// Mean sum rate in eval mode with the fixed per-sample noise of `split`.
double evaluate(nets::Model& model, const std::vector<chan::ChannelRealization>& samples, double sigma2,
                std::uint64_t seed, Split split, int batch = 512);
std::vector<double> evaluate_per_sample(nets::Model& model, const std::vector<chan::ChannelRealization>& samples,
                                        double sigma2, std::uint64_t seed, Split split, int batch = 512);

/// Fresh model with the same architecture whose pilot and beamformer
/// phases are quantized to `phase_bits`, holding a bit-exact copy of every
/// tensor of `source`.
std::unique_ptr<nets::Model> transfer_to_quantized(const nets::Model& source, int phase_bits);

struct FinetuneResult {
  std::unique_ptr<nets::Model> model;
  TrainHistory history;
};

/// Copies `pretrained` into a quantized-phase model and trains it further at
/// the fine-tune learning rate for the fine-tune epoch budget.
FinetuneResult finetune_quantized(const nets::Model& pretrained, int phase_bits, const Dataset& data,
                                  const TrainConfig& tc, const TrainOptions& opts = {});

}  // namespace airbeam::train
