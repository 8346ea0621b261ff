#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace airbeam::chan {

/// Invalid configuration; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class ChannelKind { multipath, cluster, one_ring };

const char* to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& s);

/// Inclusive integer range; lo == hi means a fixed value.
struct IntRange {
  int lo = 1;
  int hi = 1;
  bool fixed() const { return lo == hi; }
  bool operator==(const IntRange&) const = default;
};

struct SystemConfig {
  int Ny = 4;
  int Nz = 4;
  int Nc = 8;
  int K = 2;
  int Q = 4;
  double Pt = 8.0;
  double snr_db = 10.0;
  // Read the SNR as 10 log10 sqrt(Pt / (Nc sigma^2)) instead of the usual power ratio.
  bool snr_sqrt_literal = false;
  int B = 20;
  int B_phase = 0;  // 0 = infinite-resolution phase shifters
  IntRange Lp{2, 2};
  double Ts = 1e-8;  // seconds
  ChannelKind channel_kind = ChannelKind::multipath;
  IntRange Jc{1, 4};
  IntRange Jp{10, 10};
  double sigma_theta = 0.1308996938995747;  // 7.5 degrees, radians
  double sigma_tau = 1e-8;                  // seconds
  std::uint64_t seed = 1;

  int M() const { return Ny * Nz; }

  /// Throws ConfigError on the first violated constraint.
  void validate() const;

  /// `key: value` lines, one per field, in a fixed order.
  std::string snapshot() const;
  static SystemConfig from_snapshot(const std::string& text);

  bool operator==(const SystemConfig&) const = default;
};

/// Noise power sigma_n^2 for the configured SNR.
double sigma_from_snr(const SystemConfig& cfg);

}  // namespace airbeam::chan
