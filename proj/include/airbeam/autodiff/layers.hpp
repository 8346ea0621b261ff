#pragma once

#include <deque>
#include <string>
#include <vector>

#include "airbeam/autodiff/ops.hpp"
#include "airbeam/common/rng.hpp"

namespace airbeam::ad {

struct ParamEntry {
  std::string name;
  Tensor tensor;
};

struct BufferEntry {
  std::string name;
  std::vector<double> values;
};

/// Registry of a network's trainable tensors and non-trainable buffers
/// (batch-norm running statistics). Entries keep registration order and
/// stable addresses.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Tensor& add_parameter(const std::string& name, Shape shape, std::vector<double> init);
  std::vector<double>& add_buffer(const std::string& name, std::vector<double> init);

  std::deque<ParamEntry>& parameters() { return params_; }
  const std::deque<ParamEntry>& parameters() const { return params_; }
  std::deque<BufferEntry>& buffers() { return buffers_; }
  const std::deque<BufferEntry>& buffers() const { return buffers_; }

  const ParamEntry* find_parameter(const std::string& name) const;
  std::int64_t parameter_count() const;
  void zero_grad();

  /// Copies every value from `other`. Both registries must hold the same
  /// names and shapes; otherwise throws and leaves this store untouched.
  void copy_from(const ParameterStore& other);

 private:
  void check_unique(const std::string& name) const;

  std::deque<ParamEntry> params_;
  std::deque<BufferEntry> buffers_;
};

/// Fully-connected layer, weight [in, out], bias [out], both drawn from
/// U(-1/sqrt(in), 1/sqrt(in)).
class Dense {
 public:
  Dense() = default;
  Dense(ParameterStore& store, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }
  Tensor& weight() { return *weight_; }
  Tensor& bias() { return *bias_; }

 private:
  Tensor* weight_ = nullptr;
  Tensor* bias_ = nullptr;
  std::int64_t in_ = 0;
  std::int64_t out_ = 0;
};

/// Same-padded 1-D convolution over [batch, channels, length].
class Conv1d {
 public:
  static constexpr std::int64_t kWidth = 5;

  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, std::int64_t in_channels, std::int64_t out_channels,
         Rng& rng);
  Tensor forward(const Tensor& x) const;
  Tensor& weight() { return *weight_; }
  Tensor& bias() { return *bias_; }

 private:
  Tensor* weight_ = nullptr;
  Tensor* bias_ = nullptr;
};

class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, std::int64_t features);
  Tensor forward(const Tensor& x, bool training) const;
  Tensor& gamma() { return *gamma_; }
  Tensor& beta() { return *beta_; }
  std::vector<double>& running_mean() { return *mean_; }
  std::vector<double>& running_var() { return *var_; }

 private:
  Tensor* gamma_ = nullptr;
  Tensor* beta_ = nullptr;
  std::vector<double>* mean_ = nullptr;
  std::vector<double>* var_ = nullptr;
};

}  // namespace airbeam::ad
