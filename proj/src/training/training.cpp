#include "airbeam/training/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "airbeam/autodiff/checkpoint.hpp"
#include "airbeam/common/hash.hpp"
#include "airbeam/common/parallel.hpp"

namespace airbeam::train {

namespace {

constexpr std::uint64_t kChannelPurpose = 0xC4A7;
constexpr std::uint64_t kNoisePurpose = 0x9015E;
constexpr std::uint64_t kShufflePurpose = 0x5F1E;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void require(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw chan::ConfigError(field, msg);
}

std::vector<const chan::ChannelRealization*> pointers(const std::vector<chan::ChannelRealization>& samples,
                                                      const std::vector<std::int64_t>& idx) {
  std::vector<const chan::ChannelRealization*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&samples[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

TrainConfig TrainConfig::published() {
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1024;
  tc.batches_per_epoch = 200;
  tc.lr_initial = 1e-3;
  tc.lr_decay_factor = 0.3;
  tc.lr_decay_epochs = {100, 150};
  tc.sizes = {204800, 20480, 20480};
  return tc;
}

void TrainConfig::validate() const {
  require(epochs >= 1, "train.epochs", "must be >= 1");
  require(batch_size >= 1, "train.batch_size", "must be >= 1");
  require(batches_per_epoch >= 0, "train.batches_per_epoch", "must be >= 0");
  require(lr_initial > 0, "train.lr_initial", "must be > 0");
  require(lr_decay_factor > 0 && lr_decay_factor < 1, "train.lr_decay_factor", "must lie in (0, 1)");
  for (int e : lr_decay_epochs) require(e >= 1, "train.lr_decay_epochs", "entries must be >= 1");
  require(patience >= 1, "train.patience", "must be >= 1");
  require(beta1 >= 0 && beta1 < 1, "train.beta1", "must lie in [0, 1)");
  require(beta2 >= 0 && beta2 < 1, "train.beta2", "must lie in [0, 1)");
  require(eps > 0, "train.eps", "must be > 0");
  require(finetune_lr >= 0, "train.finetune_lr", "must be >= 0");
  require(finetune_epochs >= 0, "train.finetune_epochs", "must be >= 0");
  require(sizes.train >= 1, "dataset.train", "must be >= 1");
  require(sizes.val >= 1, "dataset.val", "must be >= 1");
  require(sizes.test >= 1, "dataset.test", "must be >= 1");
}

std::string TrainConfig::snapshot() const {
  std::ostringstream os;
  os << "train.epochs: " << epochs << "\n"
     << "train.batch_size: " << batch_size << "\n"
     << "train.batches_per_epoch: " << batches_per_epoch << "\n"
     << "train.lr_initial: " << fmt(lr_initial) << "\n"
     << "train.lr_decay_factor: " << fmt(lr_decay_factor) << "\n"
     << "train.lr_decay_epochs:";
  for (int e : lr_decay_epochs) os << " " << e;
  os << "\n"
     << "train.patience: " << patience << "\n"
     << "train.adam: " << fmt(beta1) << " " << fmt(beta2) << " " << fmt(eps) << "\n"
     << "train.finetune_lr: " << fmt(effective_finetune_lr()) << "\n"
     << "train.finetune_epochs: " << effective_finetune_epochs() << "\n"
     << "train.freeze_noise: " << (freeze_noise ? 1 : 0) << "\n"
     << "dataset.sizes: " << sizes.train << " " << sizes.val << " " << sizes.test << "\n"
     << "train.seed: " << seed << "\n";
  return os.str();
}

double TrainConfig::lr_at(int epoch) const {
  double lr = lr_initial;
  for (int d : lr_decay_epochs)
    if (epoch > d) lr *= lr_decay_factor;
  return lr;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

StreamId channel_stream(std::uint64_t seed, Split split, std::int64_t index) {
  return {seed, kChannelPurpose, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(index)};
}

std::vector<chan::ChannelRealization> gen_split(const chan::SystemConfig& cfg, Split split, std::int64_t n,
                                                std::uint64_t seed) {
  cfg.validate();
  std::vector<chan::ChannelRealization> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    const auto id = channel_stream(seed, split, static_cast<std::int64_t>(i));
    Rng rng = make_stream(id.seed, id.purpose, id.split, id.index);
    out[i] = chan::gen_channel(cfg, rng);
  });
  return out;
}

Dataset gen_dataset(const chan::SystemConfig& cfg, const DatasetSizes& sizes, std::uint64_t seed) {
  Dataset d;
  d.train = gen_split(cfg, Split::train, sizes.train, seed);
  d.val = gen_split(cfg, Split::val, sizes.val, seed);
  d.test = gen_split(cfg, Split::test, sizes.test, seed);
  return d;
}

Dataset cached_dataset(const chan::SystemConfig& cfg, const DatasetSizes& sizes, std::uint64_t seed,
                       const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return gen_dataset(cfg, sizes, seed);
  std::filesystem::create_directories(cache_dir);
  const std::string key = hex64(fnv1a(cfg.snapshot() + "seed: " + std::to_string(seed)));
  const std::pair<Split, std::int64_t> parts[] = {
      {Split::train, sizes.train}, {Split::val, sizes.val}, {Split::test, sizes.test}};
  Dataset d;
  std::vector<chan::ChannelRealization>* slots[] = {&d.train, &d.val, &d.test};
  for (int i = 0; i < 3; ++i) {
    const auto [split, n] = parts[i];
    const auto file = cache_dir / (key + "_" + to_string(split) + "_" + std::to_string(n) + ".abds");
    if (std::filesystem::exists(file)) {
      *slots[i] = chan::read_dataset(file);
    } else {
      *slots[i] = gen_split(cfg, split, n, seed);
      const auto tmp = file.string() + ".tmp";
      chan::write_dataset(tmp, cfg, *slots[i]);
      std::filesystem::rename(tmp, file);
    }
  }
  return d;
}

ad::ComplexPair sample_noise(const nets::Model& model, const std::vector<std::int64_t>& indices, double sigma2,
                             std::uint64_t seed, Split split, std::uint64_t epoch) {
  ad::Shape shape = model.noise_shape();
  const auto per = static_cast<std::size_t>(ad::numel_of(shape));
  shape[0] = static_cast<std::int64_t>(indices.size());
  std::vector<double> re(per * indices.size()), im(per * indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    Rng rng = make_stream(seed, kNoisePurpose, (static_cast<std::uint64_t>(split) << 32) | epoch,
                          static_cast<std::uint64_t>(indices[b]));
    for (std::size_t i = 0; i < per; ++i) {
      const auto z = complex_normal(rng, sigma2);
      re[b * per + i] = z.real();
      im[b * per + i] = z.imag();
    }
  }
  return {ad::Tensor::constant(shape, std::move(re)), ad::Tensor::constant(shape, std::move(im))};
}

ad::Tensor loss_sum_rate(nets::Model& model, const link::ChannelBatch& ch, const ad::ComplexPair* noise,
                         double sigma2, bool training) {
  return ad::neg(ad::mean(model.forward(ch, noise, sigma2, training).rate));
}

Adam::Adam(ad::ParameterStore& store, double beta1, double beta2, double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.parameters()) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
  }
}

void Adam::step(double lr) {
  auto& params = store_->parameters();
  if (params.size() != m_.size()) throw std::logic_error("Adam: parameter registry changed after construction");
  for (const auto& p : params) {
    for (double g : p.tensor.node()->grad) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in " + p.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& node = *params[k].tensor.node();
    if (node.grad.empty()) {
      // zero gradient: moments still decay
      for (std::size_t i = 0; i < m_[k].size(); ++i) {
        m_[k][i] *= beta1_;
        v_[k][i] *= beta2_;
        node.value[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
      }
      continue;
    }
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = node.grad[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
      node.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

bool EarlyStopper::update(double metric) {
  if (!seen_ || metric > best_) {
    seen_ = true;
    best_ = metric;
    since_best_ = 0;
    last_improved_ = true;
    return false;
  }
  last_improved_ = false;
  return ++since_best_ >= patience_;
}

std::string TrainHistory::csv() const {
  std::ostringstream os;
  os << "epoch,loss,val_rate,lr,seconds\n";
  for (const auto& e : epochs) {
    os << e.epoch << "," << fmt(e.loss) << "," << fmt(e.val_rate) << "," << fmt(e.lr) << "," << fmt(e.seconds)
       << "\n";
  }
  return os.str();
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << csv();
}

std::vector<double> evaluate_per_sample(nets::Model& model, const std::vector<chan::ChannelRealization>& samples,
                                        double sigma2, std::uint64_t seed, Split split, int batch) {
  ad::NoGradGuard no_grad;
  std::vector<double> rates;
  rates.reserve(samples.size());
  const auto n = static_cast<std::int64_t>(samples.size());
  for (std::int64_t start = 0; start < n; start += batch) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(std::min<std::int64_t>(batch, n - start)));
    std::iota(idx.begin(), idx.end(), start);
    const auto ch = link::make_channel_batch(pointers(samples, idx));
    const auto noise = sample_noise(model, idx, sigma2, seed, split, 0);
    const auto r = model.forward(ch, &noise, sigma2, false);
    for (double v : r.rate.values()) rates.push_back(v);
  }
  return rates;
}

double evaluate(nets::Model& model, const std::vector<chan::ChannelRealization>& samples, double sigma2,
                std::uint64_t seed, Split split, int batch) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
  const auto rates = evaluate_per_sample(model, samples, sigma2, seed, split, batch);
  return std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
}

TrainHistory train(nets::Model& model, const Dataset& data, const TrainConfig& tc, const TrainOptions& opts) {
  tc.validate();
  if (data.train.empty() || data.val.empty()) throw std::invalid_argument("train: empty training or validation split");
  const double sigma2 = chan::sigma_from_snr(model.config());
  const auto n = static_cast<std::int64_t>(data.train.size());
  const int bs = static_cast<int>(std::min<std::int64_t>(tc.batch_size, n));
  const int batches = tc.batches_per_epoch > 0 ? tc.batches_per_epoch : static_cast<int>(std::max<std::int64_t>(1, n / bs));
  const std::string snapshot = model.snapshot() + tc.snapshot();
  const bool save = !opts.checkpoint_dir.empty();
  if (save) std::filesystem::create_directories(opts.checkpoint_dir);
  auto ckpt_path = [&](const char* tag) { return opts.checkpoint_dir / (opts.checkpoint_prefix + "_" + tag + ".ckpt"); };

  Adam adam(model.store(), tc.beta1, tc.beta2, tc.eps);
  EarlyStopper stopper(tc.patience);
  TrainHistory hist;
  ad::Checkpoint best = ad::snapshot(model.store(), snapshot);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::int64_t cursor = n;  // forces a shuffle on the first batch

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = tc.lr_at(epoch);
    double loss_sum = 0;
    try {
      for (int b = 0; b < batches; ++b) {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(bs));
        for (auto& i : idx) {
          if (cursor == n) {
            std::iota(order.begin(), order.end(), 0);
            Rng rng = make_stream(tc.seed, kShufflePurpose, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(b));
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
          }
          i = order[static_cast<std::size_t>(cursor++)];
        }
        const auto ch = link::make_channel_batch(pointers(data.train, idx));
        const auto noise =
            sample_noise(model, idx, sigma2, tc.seed, Split::train, tc.freeze_noise ? 1 : static_cast<std::uint64_t>(epoch));
        model.store().zero_grad();
        const auto loss = loss_sum_rate(model, ch, &noise, sigma2, true);
        const double lv = loss.item();
        if (!std::isfinite(lv)) throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch));
        ad::backward(loss);
        adam.step(lr);
        loss_sum += lv;
      }
    } catch (const NonFiniteError& e) {
      hist.abort_reason = e.what();
      break;
    }
    model.store().zero_grad();
    const double val = evaluate(model, data.val, sigma2, tc.seed, Split::val, opts.eval_batch);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochRecord rec{epoch, loss_sum / batches, val, lr, secs};
    hist.epochs.push_back(rec);
    if (!std::isfinite(val)) {
      hist.abort_reason = "non-finite validation rate at epoch " + std::to_string(epoch);
      break;
    }
    const bool stop = stopper.update(val);
    if (stopper.last_improved()) {
      hist.best_epoch = epoch;
      hist.best_val_rate = val;
      best = ad::snapshot(model.store(), snapshot);
      if (save) ad::write_checkpoint(ckpt_path("best"), best);
    }
    if (opts.on_epoch) opts.on_epoch(rec);
    if (stop) {
      hist.stopped_early = true;
      break;
    }
  }
  if (save && hist.abort_reason.empty()) ad::save_checkpoint(ckpt_path("final"), model.store(), snapshot);
  ad::restore(best, model.store());
  if (!opts.history_csv.empty()) hist.write_csv(opts.history_csv);
  return hist;
}

std::unique_ptr<nets::Model> transfer_to_quantized(const nets::Model& source, int phase_bits) {
  auto cfg = source.config();
  cfg.B_phase = phase_bits;
  auto target = nets::make_model(source.mode(), cfg, source.spec(), 0);
  target->store().copy_from(source.store());
  return target;
}

FinetuneResult finetune_quantized(const nets::Model& pretrained, int phase_bits, const Dataset& data,
                                  const TrainConfig& tc, const TrainOptions& opts) {
  if (phase_bits < 1) throw std::invalid_argument("finetune_quantized: phase bits must be >= 1");
  FinetuneResult out;
  out.model = transfer_to_quantized(pretrained, phase_bits);
  TrainConfig ft = tc;
  ft.lr_initial = tc.effective_finetune_lr();
  ft.epochs = tc.effective_finetune_epochs();
  ft.lr_decay_epochs.clear();
  ft.finetune_lr = 0;
  ft.finetune_epochs = 0;
  out.history = train(*out.model, data, ft, opts);
  return out;
}

}  // namespace airbeam::train
