#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "airbeam/channel/channel.hpp"
#include "airbeam/common/rng.hpp"

namespace airbeam::link {

using chan::cd;

struct HybridBeamformer {
  Eigen::MatrixXd theta;              // M x K analog phases
  Eigen::MatrixXcd F_RF;              // M x K, unit modulus
  std::vector<Eigen::MatrixXcd> F_BB;  // Nc matrices, K x K
};

struct FeedbackMessage {
  std::vector<std::uint8_t> bits;
};

/// W~ = exp(j Phi) / sqrt(M) for Phi of shape QK x M.
Eigen::MatrixXcd tdd_combiner(const Eigen::MatrixXd& phi);
/// X~ = sqrt(Pt / (M Nc)) exp(j Phi) for Phi of shape Q x M.
Eigen::MatrixXcd fdd_pilot_matrix(const Eigen::MatrixXd& phi, double Pt, int Nc);

/// Per-user uplink measurements W~ (H[k] + Z), noise drawn at the antennas.
std::vector<Eigen::MatrixXcd> tdd_uplink_pilots(const Eigen::MatrixXd& phi, const chan::ChannelRealization& ch,
                                                double sigma2, Rng& rng);
/// Per-user downlink measurements X~ H[k] + Z with white noise at the user.
std::vector<Eigen::MatrixXcd> fdd_downlink_pilots(const Eigen::MatrixXd& phi, const chan::ChannelRealization& ch,
                                                  double sigma2, Rng& rng, double Pt);

Eigen::MatrixXcd assemble_analog(const Eigen::MatrixXd& theta);

/// Scales each F_bar[n] so that ||F_RF F_BB[n]||_F <= sqrt(Pt / Nc).
std::vector<Eigen::MatrixXcd> normalize_digital(const Eigen::MatrixXcd& F_RF, const std::vector<Eigen::MatrixXcd>& F_bar,
                                                double Pt, int Nc);

HybridBeamformer make_hybrid(const Eigen::MatrixXd& theta, const std::vector<Eigen::MatrixXcd>& F_bar, double Pt);

/// Sum rate in bit/s/Hz, averaged over subcarriers, for per-subcarrier
/// precoders F[n] (M x K), column k serving user k.
double sum_rate_digital(const chan::ChannelRealization& ch, const std::vector<Eigen::MatrixXcd>& F, double sigma2);
double sum_rate(const chan::ChannelRealization& ch, const HybridBeamformer& bf, double sigma2);

/// Nearest point of {2 pi i / 2^bits}, input wrapped to [0, 2 pi), ties to
/// the lower grid value. Result lies in [0, 2 pi).
double quantize_phase(double theta, int bits);
Eigen::MatrixXd quantize_phases(const Eigen::MatrixXd& theta, int bits);
/// Wrap-around distance between two phases.
double phase_distance(double a, double b);

/// 1 for v >= 0, else 0.
inline std::uint8_t quantize_bit(double v) { return v >= 0 ? 1 : 0; }
FeedbackMessage quantize_bits(const std::vector<double>& v);
/// Bipolar value a bit takes inside the networks: +0.5 for 1, -0.5 for 0.
inline double bipolar(std::uint8_t bit) { return bit ? 0.5 : -0.5; }

}  // namespace airbeam::link
