#pragma once

#include <memory>
#include <string>
#include <vector>

#include "airbeam/airlink/diff.hpp"
#include "airbeam/autodiff/layers.hpp"
#include "airbeam/channel/config.hpp"

namespace airbeam::nets {

using ad::ComplexPair;
using ad::ParameterStore;
using ad::Tensor;

struct NetworkSpec {
  std::vector<int> tdd_branch{1024, 512, 128};   // per-user dense stack
  std::vector<int> tdd_trunk{2048, 1024, 512};   // after splicing the users
  std::vector<int> pfn{1024, 512};
  std::vector<int> fdd_hbfn{2048, 1024, 512};
  int C1 = 256;
  int C2 = 512;

  /// Published widths scaled by M Nc / 2048 (floor 64) with the given conv widths.
  static NetworkSpec scaled(const chan::SystemConfig& cfg, int c1 = 32, int c2 = 64);
  std::string snapshot() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// Size of the beamformer head: 2 Nc K^2 + M K.
std::int64_t hbfn_output_size(const chan::SystemConfig& cfg);

/// conv -> BN -> Mish -> conv -> BN -> Mish -> conv, plus the input.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParameterStore& store, const std::string& name, std::int64_t channels, int c1, int c2, Rng& rng);
  Tensor forward(const Tensor& x, bool training) const;
  std::int64_t channels() const { return channels_; }
  ad::Conv1d& conv(int i) { return convs_[i]; }
  ad::BatchNorm& norm(int i) { return norms_[i]; }

 private:
  std::int64_t channels_ = 0;
  ad::Conv1d convs_[3];
  ad::BatchNorm norms_[2];
};

/// Dense layers each followed by BN and Mish.
class DenseStack {
 public:
  DenseStack() = default;
  DenseStack(ParameterStore& store, const std::string& name, std::int64_t in, const std::vector<int>& widths,
             Rng& rng);
  Tensor forward(Tensor x, bool training) const;
  std::int64_t out_features() const { return out_; }

 private:
  std::vector<ad::Dense> dense_;
  std::vector<ad::BatchNorm> norms_;
  std::int64_t out_ = 0;
};

/// Maps the beamformer head [B, MK + 2 Nc K^2] to (theta [B, M, K], fbar).
class BeamformerHead {
 public:
  BeamformerHead() = default;
  BeamformerHead(ParameterStore& store, const std::string& name, const chan::SystemConfig& cfg, std::int64_t in,
                 const NetworkSpec& spec, Rng& rng);
  std::pair<Tensor, Tensor> forward(const Tensor& x, bool training) const;

 private:
  ad::Dense out_;
  ResBlock digital_;
  int M_ = 0, K_ = 0, Nc_ = 0;
};

enum class Mode { tdd, fdd };

struct ForwardResult {
  Tensor theta;              // [B, M, K], after phase quantization when enabled
  link::DiffBeamformer bf;
  Tensor rate;               // [B]
  Tensor feedback;           // FDD only: bipolar bits [B, K, B_bits]
  Tensor pre_quantization;   // FDD only: sigmoid - 0.5, same shape
};

/// Shared machinery of the two end-to-end pipelines: pilot phases (HPN or
/// Q-HPN), the networks, and phase resolution.
class Model {
 public:
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Mode mode() const { return mode_; }
  const chan::SystemConfig& config() const { return cfg_; }
  const NetworkSpec& spec() const { return spec_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  Tensor& phi() { return *phi_; }

  int phase_bits() const { return phase_bits_; }
  void set_phase_bits(int bits);
  /// Replaces every quantizer by the identity (used for finite-difference checks).
  void set_bypass_quantizers(bool on) { bypass_ = on; }

  /// Per-sample noise shape ([1, ...]) the pilots expect.
  virtual ad::Shape noise_shape() const = 0;

  /// Full pipeline: pilots (+ noise) -> networks -> beamformer -> rate.
  virtual ForwardResult forward(const link::ChannelBatch& ch, const ComplexPair* noise, double sigma2,
                                bool training) = 0;

  /// Pilot phases as used in the forward pass (quantized when enabled).
  Tensor effective_phi() const;
  std::string snapshot() const;

 protected:
  Model(Mode mode, const chan::SystemConfig& cfg, const NetworkSpec& spec);
  Tensor quantize_phase_tensor(const Tensor& t) const;

  Mode mode_;
  chan::SystemConfig cfg_;
  NetworkSpec spec_;
  ParameterStore store_;
  Tensor* phi_ = nullptr;
  int phase_bits_ = 0;
  bool bypass_ = false;
};

class TddModel : public Model {
 public:
  TddModel(const chan::SystemConfig& cfg, const NetworkSpec& spec, std::uint64_t seed);
  ad::Shape noise_shape() const override;
  ForwardResult forward(const link::ChannelBatch& ch, const ComplexPair* noise, double sigma2,
                        bool training) override;
  /// TDD-HBFN on given per-user measurements [B, K, QK, Nc].
  std::pair<Tensor, Tensor> hbfn(const ComplexPair& y, bool training) const;

 private:
  ResBlock input_block_;
  DenseStack branch_;
  DenseStack trunk_;
  BeamformerHead head_;
};

class FddModel : public Model {
 public:
  FddModel(const chan::SystemConfig& cfg, const NetworkSpec& spec, std::uint64_t seed);
  ad::Shape noise_shape() const override;
  ForwardResult forward(const link::ChannelBatch& ch, const ComplexPair* noise, double sigma2,
                        bool training) override;

  /// PFN on per-user measurements [R, Q, Nc] (users flattened into R);
  /// returns (sigmoid - 0.5 values, bipolar bits), both [R, B].
  std::pair<Tensor, Tensor> pfn(const ComplexPair& y, bool training) const;
  /// FDD-HBFN on bipolar feedback [B, K * bits].
  std::pair<Tensor, Tensor> hbfn(const Tensor& q, bool training) const;

 private:
  ResBlock pfn_block_;
  DenseStack pfn_stack_;
  ad::Dense pfn_out_;
  DenseStack hbfn_stack_;
  BeamformerHead head_;
};

std::unique_ptr<Model> make_model(Mode mode, const chan::SystemConfig& cfg, const NetworkSpec& spec,
                                  std::uint64_t seed);

const char* to_string(Mode m);

}  // namespace airbeam::nets
