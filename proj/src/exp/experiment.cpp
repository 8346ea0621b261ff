#include "airbeam/exp/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "airbeam/autodiff/checkpoint.hpp"
#include "airbeam/common/hash.hpp"
#include "airbeam/common/log.hpp"
#include "airbeam/common/parallel.hpp"

namespace airbeam::exp {

using chan::ConfigError;

namespace {

constexpr std::uint64_t kEvalNoisePurpose = 0xE7A1;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string range_str(const chan::IntRange& r) {
  return r.fixed() ? std::to_string(r.lo) : std::to_string(r.lo) + ".." + std::to_string(r.hi);
}

// Reads one YAML mapping, remembering which keys were used so that typos
// are reported instead of silently ignored.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(name_, "expected a mapping");
  }

  std::string field(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  YAML::Node get(const std::string& key) {
    used_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node n = node_[key];
    return n && !n.IsNull() ? n : YAML::Node(YAML::NodeType::Undefined);
  }

  template <class T>
  void read(const std::string& key, T& out) {
    const auto n = get(key);
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), std::string("cannot read '") + scalar(n) + "' as " + type_name<T>());
    }
  }

  void read_range(const std::string& key, chan::IntRange& out) {
    const auto n = get(key);
    if (!n) return;
    try {
      if (n.IsSequence()) {
        if (n.size() != 2) throw ConfigError(field(key), "expected [lo, hi]");
        out = {n[0].as<int>(), n[1].as<int>()};
      } else {
        const auto s = n.as<std::string>();
        const auto dots = s.find("..");
        if (dots == std::string::npos) {
          out.lo = out.hi = parse_int(key, s);
        } else {
          out = {parse_int(key, s.substr(0, dots)), parse_int(key, s.substr(dots + 2))};
        }
      }
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), "expected an integer, lo..hi or [lo, hi]");
    }
  }

  Section child(const std::string& key) { return Section(get(key), field(key)); }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!used_.count(k)) throw ConfigError(field(k), "unknown key");
    }
  }

 private:
  int parse_int(const std::string& key, const std::string& s) const {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw ConfigError(field(key), "expected an integer or lo..hi, got '" + s + "'");
    return v;
  }

  static std::string scalar(const YAML::Node& n) { return n.IsScalar() ? n.Scalar() : "<non-scalar>"; }

  template <class T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else return "a string";
  }

  YAML::Node node_;
  std::string name_;
  std::set<std::string> used_;
};

// Field names reported by the lower layers carry no section; add it.
template <class Fn>
void with_section(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    if (e.field().rfind(section + ".", 0) == 0 || e.field().find('.') != std::string::npos) throw;
    const std::string what = e.what();
    throw ConfigError(section + "." + e.field(), what.substr(e.field().size() + 2));
  }
}

bool is_integral(double v) { return std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e9; }

nets::Mode mode_of(base::Scheme s) { return s == base::Scheme::proposed_tdd ? nets::Mode::tdd : nets::Mode::fdd; }

// Whether a sweep along `axis` changes the network of `scheme`.
bool needs_retrain(SweepAxis axis, base::Scheme scheme) {
  switch (axis) {
    case SweepAxis::B: return scheme == base::Scheme::proposed_fdd;  // feedback width
    case SweepAxis::Q:
    case SweepAxis::K: return true;
    default: return false;
  }
}

std::string value_tag(SweepAxis axis, double v) {
  if (axis == SweepAxis::B_phase) return "Bphase" + std::to_string(static_cast<int>(v));
  return std::string(to_string(axis)) + std::to_string(static_cast<int>(v));
}

}  // namespace

const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::snr_db: return "snr_db";
    case SweepAxis::B: return "B";
    case SweepAxis::Q: return "Q";
    case SweepAxis::K: return "K";
    case SweepAxis::Lp: return "Lp";
    case SweepAxis::B_phase: return "B_phase";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  for (auto a : {SweepAxis::none, SweepAxis::snr_db, SweepAxis::B, SweepAxis::Q, SweepAxis::K, SweepAxis::Lp,
                 SweepAxis::B_phase}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("sweep.axis", "expected one of snr_db, B, Q, K, Lp, B_phase, got '" + s + "'");
}

ExperimentConfig ExperimentConfig::parse(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("yaml", e.what());
  }
  ExperimentConfig c;
  if (!root || root.IsNull()) throw ConfigError("yaml", "empty config");
  Section top(root, "");
  top.read("name", c.name);
  top.read("seed", c.seed);

  {
    auto s = top.child("system");
    auto& y = c.system;
    s.read("Ny", y.Ny);
    s.read("Nz", y.Nz);
    s.read("Nc", y.Nc);
    s.read("K", y.K);
    s.read("Q", y.Q);
    s.read("Pt", y.Pt);
    s.read("snr_db", y.snr_db);
    s.read("snr_sqrt_literal", y.snr_sqrt_literal);
    s.read("B", y.B);
    s.read("B_phase", y.B_phase);
    s.read_range("Lp", y.Lp);
    s.read("Ts_s", y.Ts);
    std::string kind = to_string(y.channel_kind);
    s.read("channel_kind", kind);
    with_section("system", [&] { y.channel_kind = chan::channel_kind_from_string(kind); });
    s.read_range("Jc", y.Jc);
    s.read_range("Jp", y.Jp);
    s.read("sigma_theta_rad", y.sigma_theta);
    s.read("sigma_tau_s", y.sigma_tau);
    s.finish();
  }
  {
    auto s = top.child("train");
    auto& t = c.train;
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("batches_per_epoch", t.batches_per_epoch);
    s.read("lr_initial", t.lr_initial);
    s.read("lr_decay_factor", t.lr_decay_factor);
    s.read("lr_decay_epochs", t.lr_decay_epochs);
    s.read("patience", t.patience);
    s.read("adam_beta1", t.beta1);
    s.read("adam_beta2", t.beta2);
    s.read("adam_eps", t.eps);
    s.read("finetune_lr", t.finetune_lr);
    s.read("finetune_epochs", t.finetune_epochs);
    s.read("freeze_noise", t.freeze_noise);
    s.finish();
  }
  {
    auto s = top.child("dataset");
    s.read("train", c.train.sizes.train);
    s.read("val", c.train.sizes.val);
    s.read("test", c.train.sizes.test);
    std::string dir;
    s.read("cache_dir", dir);
    c.cache_dir = dir;
    s.finish();
  }
  {
    auto s = top.child("network");
    std::string widths = "desk";
    s.read("widths", widths);
    if (widths != "desk" && widths != "full") throw ConfigError("network.widths", "expected desk or full");
    c.full_widths = widths == "full";
    s.read("conv_c1", c.conv_c1);
    s.read("conv_c2", c.conv_c2);
    s.finish();
  }
  {
    const auto n = top.get("schemes");
    if (n) {
      if (!n.IsSequence()) throw ConfigError("schemes", "expected a list");
      for (const auto& e : n) {
        const auto name = e.as<std::string>();
        try {
          c.schemes.push_back(base::scheme_from_string(name));
        } catch (const std::invalid_argument& ex) {
          throw ConfigError("schemes", ex.what());
        }
      }
    }
  }
  {
    auto s = top.child("sweep");
    std::string axis = "none";
    s.read("axis", axis);
    c.sweep.axis = sweep_axis_from_string(axis);
    s.read("values", c.sweep.values);
    s.finish();
  }
  {
    auto s = top.child("baselines");
    auto& b = c.baselines;
    s.read("grid_azimuth", b.G_az);
    s.read("grid_zenith", b.G_ze);
    s.read("grid_delay", b.G_d);
    s.read("max_paths", b.max_paths);
    s.read("lloyd_training", b.lloyd_training);
    std::string pilots = b.pilots == base::PilotKind::fdd ? "fdd" : "tdd";
    s.read("pilots", pilots);
    if (pilots != "fdd" && pilots != "tdd") throw ConfigError("baselines.pilots", "expected fdd or tdd");
    b.pilots = pilots == "fdd" ? base::PilotKind::fdd : base::PilotKind::tdd;
    s.finish();
  }
  {
    auto s = top.child("eval");
    s.read("realizations", c.eval_realizations);
    s.finish();
  }
  {
    auto s = top.child("output");
    std::string results = c.results_csv.string(), ckpt = c.checkpoint_dir.string();
    s.read("results_csv", results);
    s.read("checkpoint_dir", ckpt);
    c.results_csv = results;
    c.checkpoint_dir = ckpt;
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::validate() const {
  auto sys = system;
  sys.seed = seed;
  with_section("system", [&] { sys.validate(); });
  auto tc = train;
  tc.seed = seed;
  tc.validate();
  if (schemes.empty()) throw ConfigError("schemes", "needs at least one scheme");
  if (std::set<base::Scheme>(schemes.begin(), schemes.end()).size() != schemes.size())
    throw ConfigError("schemes", "lists a scheme twice");
  if (conv_c1 < 1 || conv_c2 < 1) throw ConfigError("network.conv_c1", "conv widths must be >= 1");
  if (eval_realizations < 1) throw ConfigError("eval.realizations", "must be >= 1");
  const auto& b = baselines;
  if (b.G_az < 1 || b.G_ze < 1 || b.G_d < 0) throw ConfigError("baselines.grid_azimuth", "grid sizes must be >= 1");
  if (b.lloyd_training < 1) throw ConfigError("baselines.lloyd_training", "must be >= 1");
  if (sweep.axis == SweepAxis::none) {
    if (!sweep.values.empty()) throw ConfigError("sweep.axis", "values given without an axis");
    return;
  }
  if (sweep.values.empty()) throw ConfigError("sweep.values", "must not be empty");
  if (std::set<double>(sweep.values.begin(), sweep.values.end()).size() != sweep.values.size())
    throw ConfigError("sweep.values", "contains a value twice");
  for (std::size_t i = 0; i < sweep.values.size(); ++i) {
    const double v = sweep.values[i];
    if (sweep.axis != SweepAxis::snr_db && !is_integral(v))
      throw ConfigError("sweep.values", "axis " + std::string(to_string(sweep.axis)) + " takes integers, got " + fmt(v));
    with_section("sweep.values", [&] { point_config(i).validate(); });
  }
}

chan::SystemConfig ExperimentConfig::point_config(std::size_t i) const {
  auto c = system;
  c.seed = seed;
  if (sweep.axis == SweepAxis::none) return c;
  const double v = sweep.values.at(i);
  const int iv = static_cast<int>(v);
  switch (sweep.axis) {
    case SweepAxis::snr_db: c.snr_db = v; break;
    case SweepAxis::B: c.B = iv; break;
    case SweepAxis::Q: c.Q = iv; break;
    case SweepAxis::K: c.K = iv; break;
    case SweepAxis::Lp: c.Lp = {iv, iv}; break;
    case SweepAxis::B_phase: c.B_phase = iv; break;
    case SweepAxis::none: break;
  }
  return c;
}

nets::NetworkSpec ExperimentConfig::network_for(const chan::SystemConfig& cfg) const {
  return full_widths ? nets::NetworkSpec{} : nets::NetworkSpec::scaled(cfg, conv_c1, conv_c2);
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  auto sys = system;
  sys.seed = seed;
  auto tc = train;
  tc.seed = seed;
  os << "seed: " << seed << "\n" << sys.snapshot() << tc.snapshot();
  os << "network.widths: " << (full_widths ? "full" : "desk") << "\nnetwork.conv: " << conv_c1 << " " << conv_c2
     << "\nschemes:";
  for (auto s : schemes) os << " " << base::to_string(s);
  os << "\nsweep.axis: " << to_string(sweep.axis) << "\nsweep.values:";
  for (double v : sweep.values) os << " " << fmt(v);
  const auto& b = baselines;
  os << "\nbaselines: " << b.G_az << " " << b.G_ze << " " << b.G_d << " " << b.max_paths << " " << b.lloyd_training
     << " " << (b.pilots == base::PilotKind::fdd ? "fdd" : "tdd") << "\neval.realizations: " << eval_realizations
     << "\n";
  return os.str();
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical())); }

std::string results_header() {
  return "scheme,snr_db,Q,B,K,Lp,B_phase,sum_rate_bps_hz,n_realizations,seed,config_hash,wall_clock_s";
}

std::string csv_line(const ResultRow& r) {
  std::ostringstream os;
  os << r.scheme << "," << fmt(r.snr_db) << "," << r.Q << "," << r.B << "," << r.K << "," << range_str(r.Lp) << ","
     << r.B_phase << "," << fmt(r.sum_rate_bps_hz) << "," << r.n_realizations << "," << r.seed << "," << r.config_hash
     << "," << fmt(r.wall_clock_s);
  return os.str();
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = results_header() + "\n";
  for (const auto& r : rows) out += csv_line(r) + "\n";
  return out;
}

void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << results_csv(rows);
}

std::string ModelPlan::file_stem() const { return std::string(base::to_string(scheme)) + "_" + tag; }

std::vector<ModelPlan> plan_models(const ExperimentConfig& cfg) {
  std::vector<ModelPlan> plans;
  for (auto scheme : cfg.schemes) {
    if (!base::is_learned(scheme)) continue;
    // the unswept system, trained with infinite-resolution phases
    auto base_cfg = cfg.system;
    base_cfg.seed = cfg.seed;
    base_cfg.B_phase = 0;
    std::set<std::string> seen;
    auto add = [&](ModelPlan p) {
      if (seen.insert(p.tag).second) plans.push_back(std::move(p));
    };
    for (std::size_t i = 0; i < cfg.points(); ++i) {
      auto pc = cfg.point_config(i);
      if (needs_retrain(cfg.sweep.axis, scheme)) {
        pc.B_phase = 0;
        add({scheme, value_tag(cfg.sweep.axis, cfg.sweep.values[i]), pc, 0});
        continue;
      }
      add({scheme, "base", base_cfg, 0});
      if (pc.B_phase > 0) add({scheme, "Bphase" + std::to_string(pc.B_phase), base_cfg, pc.B_phase});
    }
  }
  return plans;
}

double baseline_mean_rate(base::Scheme scheme, const base::BaselineSetup& setup,
                          const std::vector<chan::ChannelRealization>& pool, std::uint64_t seed, int workers) {
  std::vector<double> rates(pool.size());
  parallel_for(
      pool.size(),
      [&](std::size_t i) {
        Rng rng = make_stream(seed, kEvalNoisePurpose, static_cast<std::uint64_t>(scheme), i);
        rates[i] = base::baseline_rate(scheme, setup, pool[i], rng);
      },
      workers);
  double s = 0;
  for (double r : rates) s += r;
  return s / static_cast<double>(rates.size());
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const int workers = opts.workers > 0 ? opts.workers : worker_count();
  const auto plans = plan_models(cfg);

  std::filesystem::path ckpt_dir = cfg.checkpoint_dir;
  std::optional<std::filesystem::path> single_file;
  if (opts.checkpoint) {
    const auto& p = *opts.checkpoint;
    const bool is_dir = std::filesystem::is_directory(p) || (!std::filesystem::exists(p) && !p.has_extension());
    if (is_dir) {
      ckpt_dir = p;
    } else {
      if (plans.size() != 1) {
        throw ConfigError("checkpoint", "a checkpoint file stands for one model but this experiment uses " +
                                            std::to_string(plans.size()) + "; pass a directory");
      }
      single_file = p;
      ckpt_dir = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");  // side files go next to it
    }
  }
  auto ckpt_for = [&](const ModelPlan& p) {
    return single_file ? *single_file : ckpt_dir / (p.file_stem() + ".ckpt");
  };
  if (opts.eval_only) {
    for (const auto& p : plans) {
      const auto path = ckpt_for(p);
      if (!std::filesystem::is_regular_file(path))
        throw MissingCheckpoint("--eval-only needs " + path.string() + " for " + p.file_stem());
    }
  }

  auto tc = cfg.train;
  tc.seed = cfg.seed;
  std::map<std::string, std::unique_ptr<nets::Model>> models;
  std::map<std::string, train::Dataset> datasets;  // keyed by training config snapshot
  auto dataset_for = [&](const chan::SystemConfig& c) -> const train::Dataset& {
    const auto key = c.snapshot();
    auto it = datasets.find(key);
    if (it == datasets.end()) it = datasets.emplace(key, train::cached_dataset(c, tc.sizes, cfg.seed, cfg.cache_dir)).first;
    return it->second;
  };

  for (const auto& p : plans) {
    const auto key = p.file_stem();
    const auto mode = mode_of(p.scheme);
    const auto spec = cfg.network_for(p.cfg);
    if (opts.eval_only) {
      auto mc = p.cfg;
      mc.B_phase = p.phase_bits;
      auto m = nets::make_model(mode, mc, spec, cfg.seed);
      ad::load_checkpoint(ckpt_for(p), m->store());
      models[key] = std::move(m);
      continue;
    }
    train::TrainOptions to;
    to.checkpoint_dir = ckpt_dir;
    to.checkpoint_prefix = key;
    to.history_csv = ckpt_dir / (key + "_history.csv");
    to.on_epoch = [&](const train::EpochRecord& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s epoch %d loss %.5f val %.5f lr %.3g (%.1fs)", key.c_str(), r.epoch, r.loss,
                    r.val_rate, r.lr, r.seconds);
      log_info(buf);
    };
    const auto& data = dataset_for(p.cfg);
    train::TrainHistory hist;
    if (p.phase_bits > 0) {
      const auto base_key = std::string(base::to_string(p.scheme)) + "_base";
      log_info("fine-tuning " + key + " from " + base_key);
      auto ft = train::finetune_quantized(*models.at(base_key), p.phase_bits, data, tc, to);
      hist = std::move(ft.history);
      models[key] = std::move(ft.model);
    } else {
      if (cfg.sweep.axis == SweepAxis::K && p.tag != "base")
        log_info("retraining " + std::string(base::to_string(p.scheme)) + " for K = " + std::to_string(p.cfg.K) +
                 " (the network shapes depend on the user count)");
      else
        log_info("training " + key);
      auto m = nets::make_model(mode, p.cfg, spec, cfg.seed);
      hist = train::train(*m, data, tc, to);
      models[key] = std::move(m);
    }
    if (!hist.abort_reason.empty()) warn_once(key + ": " + hist.abort_reason + ", keeping the best epoch");
    const auto& m = *models[key];
    if (single_file) {
      if (single_file->has_parent_path()) std::filesystem::create_directories(single_file->parent_path());
      ad::save_checkpoint(*single_file, m.store(), m.snapshot() + tc.snapshot());
    } else {
      ad::save_checkpoint(ckpt_for(p), m.store(), m.snapshot() + tc.snapshot());
    }
  }

  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < cfg.points(); ++i) {
    const auto pc = cfg.point_config(i);
    const double sigma2 = chan::sigma_from_snr(pc);
    const auto pool = train::gen_split(pc, train::Split::test, cfg.eval_realizations, cfg.seed);
    std::optional<base::BaselineSetup> setup;
    for (auto scheme : cfg.schemes) {
      const auto t0 = std::chrono::steady_clock::now();
      double rate = 0;
      if (base::is_learned(scheme)) {
        std::string tag = "base";
        if (needs_retrain(cfg.sweep.axis, scheme)) tag = value_tag(cfg.sweep.axis, cfg.sweep.values[i]);
        else if (pc.B_phase > 0) tag = "Bphase" + std::to_string(pc.B_phase);
        auto& m = *models.at(std::string(base::to_string(scheme)) + "_" + tag);
        rate = train::evaluate(m, pool, sigma2, cfg.seed, train::Split::test);
      } else {
        if (!setup) setup = base::make_baseline_setup(pc, cfg.baselines, cfg.seed);
        rate = baseline_mean_rate(scheme, *setup, pool, cfg.seed, workers);
      }
      ResultRow r;
      r.scheme = base::to_string(scheme);
      r.snr_db = pc.snr_db;
      r.Q = pc.Q;
      r.B = pc.B;
      r.K = pc.K;
      r.Lp = pc.Lp;
      r.B_phase = pc.B_phase;
      r.sum_rate_bps_hz = rate;
      r.n_realizations = cfg.eval_realizations;
      r.seed = cfg.seed;
      r.config_hash = cfg.hash();
      r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

}  // namespace airbeam::exp
