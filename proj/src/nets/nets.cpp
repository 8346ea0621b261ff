#include "airbeam/nets/nets.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace airbeam::nets {

using ad::Shape;

namespace {
constexpr std::uint64_t kInitStream = 0x1417;

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

Tensor stack_planes(const ComplexPair& y, int axis) { return ad::concat({y.re, y.im}, axis); }
}  // namespace

const char* to_string(Mode m) { return m == Mode::tdd ? "tdd" : "fdd"; }

NetworkSpec NetworkSpec::scaled(const chan::SystemConfig& cfg, int c1, int c2) {
  NetworkSpec s;
  const double f = static_cast<double>(cfg.M()) * cfg.Nc / 2048.0;
  auto scale = [f](std::vector<int>& v) {
    for (auto& w : v) w = std::max(64, static_cast<int>(std::lround(w * f)));
  };
  scale(s.tdd_branch);
  scale(s.tdd_trunk);
  scale(s.pfn);
  scale(s.fdd_hbfn);
  s.C1 = c1;
  s.C2 = c2;
  return s;
}

std::string NetworkSpec::snapshot() const {
  std::ostringstream os;
  os << "tdd_branch: " << join(tdd_branch) << "\n"
     << "tdd_trunk: " << join(tdd_trunk) << "\n"
     << "pfn: " << join(pfn) << "\n"
     << "fdd_hbfn: " << join(fdd_hbfn) << "\n"
     << "conv_c1: " << C1 << "\n"
     << "conv_c2: " << C2 << "\n";
  return os.str();
}

std::int64_t hbfn_output_size(const chan::SystemConfig& cfg) {
  return 2LL * cfg.Nc * cfg.K * cfg.K + static_cast<std::int64_t>(cfg.M()) * cfg.K;
}

ResBlock::ResBlock(ParameterStore& store, const std::string& name, std::int64_t channels, int c1, int c2, Rng& rng)
    : channels_(channels) {
  convs_[0] = ad::Conv1d(store, name + ".conv1", channels, c1, rng);
  norms_[0] = ad::BatchNorm(store, name + ".bn1", c1);
  convs_[1] = ad::Conv1d(store, name + ".conv2", c1, c2, rng);
  norms_[1] = ad::BatchNorm(store, name + ".bn2", c2);
  convs_[2] = ad::Conv1d(store, name + ".conv3", c2, channels, rng);
}

Tensor ResBlock::forward(const Tensor& x, bool training) const {
  if (x.rank() != 3 || x.dim(1) != channels_) {
    throw ad::DimensionError("ResBlock expects [batch, " + std::to_string(channels_) + ", length], got " +
                             ad::shape_str(x.shape()));
  }
  auto h = ad::mish(norms_[0].forward(convs_[0].forward(x), training));
  h = ad::mish(norms_[1].forward(convs_[1].forward(h), training));
  return convs_[2].forward(h) + x;
}

DenseStack::DenseStack(ParameterStore& store, const std::string& name, std::int64_t in, const std::vector<int>& widths,
                       Rng& rng)
    : out_(in) {
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto tag = name + "." + std::to_string(i);
    dense_.emplace_back(store, tag + ".fc", out_, widths[i], rng);
    norms_.emplace_back(store, tag + ".bn", widths[i]);
    out_ = widths[i];
  }
}

Tensor DenseStack::forward(Tensor x, bool training) const {
  for (std::size_t i = 0; i < dense_.size(); ++i) x = ad::mish(norms_[i].forward(dense_[i].forward(x), training));
  return x;
}

BeamformerHead::BeamformerHead(ParameterStore& store, const std::string& name, const chan::SystemConfig& cfg,
                               std::int64_t in, const NetworkSpec& spec, Rng& rng)
    : M_(cfg.M()), K_(cfg.K), Nc_(cfg.Nc) {
  out_ = ad::Dense(store, name + ".out", in, hbfn_output_size(cfg), rng);
  digital_ = ResBlock(store, name + ".digital", 2LL * K_ * K_, spec.C1, spec.C2, rng);
}

std::pair<Tensor, Tensor> BeamformerHead::forward(const Tensor& x, bool training) const {
  const auto y = out_.forward(x);
  const auto B = y.dim(0);
  const std::int64_t mk = static_cast<std::int64_t>(M_) * K_;
  auto theta = ad::reshape(ad::slice(y, 1, 0, mk), {B, M_, K_});
  auto dig = ad::reshape(ad::slice(y, 1, mk, 2LL * Nc_ * K_ * K_), {B, 2LL * K_ * K_, Nc_});
  return {theta, digital_.forward(dig, training)};
}

Model::Model(Mode mode, const chan::SystemConfig& cfg, const NetworkSpec& spec)
    : mode_(mode), cfg_(cfg), spec_(spec), phase_bits_(cfg.B_phase) {
  cfg_.validate();
}

void Model::set_phase_bits(int bits) {
  if (bits < 0) throw std::invalid_argument("phase bits must be >= 0");
  phase_bits_ = bits;
}

Tensor Model::quantize_phase_tensor(const Tensor& t) const {
  if (phase_bits_ == 0 || bypass_) return t;
  const int bits = phase_bits_;
  return ad::straight_through(t, [bits](double v) { return link::quantize_phase(v, bits); });
}

Tensor Model::effective_phi() const { return quantize_phase_tensor(*phi_); }

std::string Model::snapshot() const {
  return std::string("mode: ") + to_string(mode_) + "\n" + cfg_.snapshot() + spec_.snapshot() +
         "phase_bits: " + std::to_string(phase_bits_) + "\n";
}

namespace {
std::vector<double> uniform_phases(std::int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = uniform(rng, 0.0, 2 * std::numbers::pi);
  return v;
}
}  // namespace

TddModel::TddModel(const chan::SystemConfig& cfg, const NetworkSpec& spec, std::uint64_t seed)
    : Model(Mode::tdd, cfg, spec) {
  Rng rng = make_stream(seed, kInitStream, 1);
  const std::int64_t rows = static_cast<std::int64_t>(cfg.Q) * cfg.K;
  phi_ = &store_.add_parameter("hpn.phi", {rows, cfg.M()}, uniform_phases(rows * cfg.M(), rng));
  const std::int64_t ch = 2 * rows;
  input_block_ = ResBlock(store_, "hbfn.input", ch, spec.C1, spec.C2, rng);
  branch_ = DenseStack(store_, "hbfn.branch", ch * cfg.Nc, spec.tdd_branch, rng);
  trunk_ = DenseStack(store_, "hbfn.trunk", branch_.out_features() * cfg.K, spec.tdd_trunk, rng);
  head_ = BeamformerHead(store_, "hbfn.head", cfg, trunk_.out_features(), spec, rng);
}

Shape TddModel::noise_shape() const { return {1, cfg_.K, cfg_.Nc, cfg_.M()}; }

std::pair<Tensor, Tensor> TddModel::hbfn(const ComplexPair& y, bool training) const {
  const auto& s = y.shape();
  if (s.size() != 4 || s[1] != cfg_.K) {
    throw ad::DimensionError("TDD-HBFN expects [batch, " + std::to_string(cfg_.K) + ", QK, Nc], got " +
                             ad::shape_str(s));
  }
  const auto B = s[0], K = s[1], rows = s[2], Nc = s[3];
  auto x = ad::reshape(stack_planes(link::delay_transform(y), 2), {B * K, 2 * rows, Nc});
  x = input_block_.forward(x, training);
  x = branch_.forward(ad::reshape(x, {B * K, 2 * rows * Nc}), training);
  x = trunk_.forward(ad::reshape(x, {B, K * branch_.out_features()}), training);
  return head_.forward(x, training);
}

ForwardResult TddModel::forward(const link::ChannelBatch& ch, const ComplexPair* noise, double sigma2,
                                bool training) {
  ForwardResult r;
  const auto y = link::tdd_pilots(effective_phi(), ch, noise);
  auto [theta, fbar] = hbfn(y, training);
  r.theta = quantize_phase_tensor(theta);
  r.bf = link::assemble_beamformer(r.theta, fbar, cfg_.Pt);
  r.rate = link::sum_rate(r.bf, ch, sigma2);
  return r;
}

FddModel::FddModel(const chan::SystemConfig& cfg, const NetworkSpec& spec, std::uint64_t seed)
    : Model(Mode::fdd, cfg, spec) {
  Rng rng = make_stream(seed, kInitStream, 2);
  phi_ = &store_.add_parameter("hpn.phi", {cfg.Q, cfg.M()}, uniform_phases(static_cast<std::int64_t>(cfg.Q) * cfg.M(), rng));
  const std::int64_t ch = 2LL * cfg.Q;
  pfn_block_ = ResBlock(store_, "pfn.input", ch, spec.C1, spec.C2, rng);
  pfn_stack_ = DenseStack(store_, "pfn.hidden", ch * cfg.Nc, spec.pfn, rng);
  pfn_out_ = ad::Dense(store_, "pfn.out", pfn_stack_.out_features(), cfg.B, rng);
  hbfn_stack_ = DenseStack(store_, "hbfn.hidden", static_cast<std::int64_t>(cfg.K) * cfg.B, spec.fdd_hbfn, rng);
  head_ = BeamformerHead(store_, "hbfn.head", cfg, hbfn_stack_.out_features(), spec, rng);
}

Shape FddModel::noise_shape() const { return {1, cfg_.K, cfg_.Q, cfg_.Nc}; }

std::pair<Tensor, Tensor> FddModel::pfn(const ComplexPair& y, bool training) const {
  const auto& s = y.shape();
  if (s.size() != 3 || s[1] != cfg_.Q || s[2] != cfg_.Nc) {
    throw ad::DimensionError("PFN expects [rows, " + std::to_string(cfg_.Q) + ", " + std::to_string(cfg_.Nc) +
                             "], got " + ad::shape_str(s));
  }
  const auto R = s[0];
  auto x = pfn_block_.forward(stack_planes(link::delay_transform(y), 1), training);
  x = pfn_stack_.forward(ad::reshape(x, {R, 2LL * cfg_.Q * cfg_.Nc}), training);
  auto pre = ad::add_scalar(ad::sigmoid(pfn_out_.forward(x)), -0.5);
  if (bypass_) return {pre, pre};
  auto bits = ad::straight_through(pre, [](double v) { return link::bipolar(link::quantize_bit(v)); });
  return {pre, bits};
}

std::pair<Tensor, Tensor> FddModel::hbfn(const Tensor& q, bool training) const {
  if (q.rank() != 2 || q.dim(1) != static_cast<std::int64_t>(cfg_.K) * cfg_.B) {
    throw ad::DimensionError("FDD-HBFN expects [batch, " + std::to_string(cfg_.K * cfg_.B) + "], got " +
                             ad::shape_str(q.shape()));
  }
  return head_.forward(hbfn_stack_.forward(q, training), training);
}

ForwardResult FddModel::forward(const link::ChannelBatch& ch, const ComplexPair* noise, double sigma2,
                                bool training) {
  ForwardResult r;
  const std::int64_t B = ch.B, K = ch.K;
  const auto y = link::fdd_pilots(effective_phi(), ch, cfg_.Pt, noise);  // [B, K, Q, Nc]
  auto [pre, bits] = pfn(ad::creshape(y, {B * K, cfg_.Q, cfg_.Nc}), training);
  r.pre_quantization = ad::reshape(pre, {B, K, cfg_.B});
  r.feedback = ad::reshape(bits, {B, K, cfg_.B});
  auto [theta, fbar] = hbfn(ad::reshape(bits, {B, K * cfg_.B}), training);
  r.theta = quantize_phase_tensor(theta);
  r.bf = link::assemble_beamformer(r.theta, fbar, cfg_.Pt);
  r.rate = link::sum_rate(r.bf, ch, sigma2);
  return r;
}

std::unique_ptr<Model> make_model(Mode mode, const chan::SystemConfig& cfg, const NetworkSpec& spec,
                                  std::uint64_t seed) {
  if (mode == Mode::tdd) return std::make_unique<TddModel>(cfg, spec, seed);
  return std::make_unique<FddModel>(cfg, spec, seed);
}

}  // namespace airbeam::nets
