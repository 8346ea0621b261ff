#include "airbeam/autodiff/layers.hpp"

#include <cmath>

namespace airbeam::ad {

namespace {

std::vector<double> uniform_init(std::int64_t n, double bound, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

void ParameterStore::check_unique(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) throw InvalidInput("duplicate parameter name: " + name);
  for (const auto& b : buffers_)
    if (b.name == name) throw InvalidInput("duplicate buffer name: " + name);
}

Tensor& ParameterStore::add_parameter(const std::string& name, Shape shape, std::vector<double> init) {
  check_unique(name);
  params_.push_back({name, Tensor::parameter(std::move(shape), std::move(init))});
  return params_.back().tensor;
}

std::vector<double>& ParameterStore::add_buffer(const std::string& name, std::vector<double> init) {
  check_unique(name);
  buffers_.push_back({name, std::move(init)});
  return buffers_.back().values;
}

const ParamEntry* ParameterStore::find_parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::int64_t ParameterStore::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterStore::copy_from(const ParameterStore& other) {
  std::vector<std::string> problems;
  if (other.params_.size() != params_.size() || other.buffers_.size() != buffers_.size()) {
    problems.push_back("entry count " + std::to_string(other.params_.size()) + "+" +
                       std::to_string(other.buffers_.size()) + " vs " + std::to_string(params_.size()) + "+" +
                       std::to_string(buffers_.size()));
  }
  const std::size_t np = std::min(params_.size(), other.params_.size());
  for (std::size_t i = 0; i < np; ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.tensor.shape() != b.tensor.shape()) {
      problems.push_back(a.name + shape_str(a.tensor.shape()) + " <- " + b.name + shape_str(b.tensor.shape()));
    }
  }
  const std::size_t nb = std::min(buffers_.size(), other.buffers_.size());
  for (std::size_t i = 0; i < nb; ++i) {
    const auto& a = buffers_[i];
    const auto& b = other.buffers_[i];
    if (a.name != b.name || a.values.size() != b.values.size()) problems.push_back(a.name + " <- " + b.name);
  }
  if (!problems.empty()) {
    std::string msg = "parameter registries differ:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw DimensionError(msg);
  }
  for (std::size_t i = 0; i < np; ++i) {
    auto dst = params_[i].tensor.mutable_values();
    auto src = other.params_[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (std::size_t i = 0; i < nb; ++i) buffers_[i].values = other.buffers_[i].values;
}

Dense::Dense(ParameterStore& store, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = &store.add_parameter(name + ".weight", {in, out}, uniform_init(in * out, bound, rng));
  bias_ = &store.add_parameter(name + ".bias", {out}, uniform_init(out, bound, rng));
}

Tensor Dense::forward(const Tensor& x) const { return dense(x, *weight_, *bias_); }

Conv1d::Conv1d(ParameterStore& store, const std::string& name, std::int64_t in_channels, std::int64_t out_channels,
               Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kWidth));
  weight_ = &store.add_parameter(name + ".weight", {out_channels, in_channels, kWidth},
                                 uniform_init(out_channels * in_channels * kWidth, bound, rng));
  bias_ = &store.add_parameter(name + ".bias", {out_channels}, uniform_init(out_channels, bound, rng));
}

Tensor Conv1d::forward(const Tensor& x) const { return conv1d_same(x, *weight_, *bias_); }

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, std::int64_t features) {
  const auto n = static_cast<std::size_t>(features);
  gamma_ = &store.add_parameter(name + ".gamma", {features}, std::vector<double>(n, 1.0));
  beta_ = &store.add_parameter(name + ".beta", {features}, std::vector<double>(n, 0.0));
  mean_ = &store.add_buffer(name + ".running_mean", std::vector<double>(n, 0.0));
  var_ = &store.add_buffer(name + ".running_var", std::vector<double>(n, 1.0));
}

Tensor BatchNorm::forward(const Tensor& x, bool training) const {
  return batch_norm(x, *gamma_, *beta_, BatchNormStats{mean_, var_, kMomentum, kEps}, training);
}

}  // namespace airbeam::ad
