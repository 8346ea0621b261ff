#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "airbeam/airlink/airlink.hpp"
#include "airbeam/channel/channel.hpp"

namespace airbeam::base {

using chan::cd;

/// Redundant angle-delay dictionary. Angles sit on uniform grids over
/// (-pi/2, pi/2), delays on a uniform grid over [0, Nc Ts).
///
/// A combined atom (a, d) is the vectorized M x Nc channel a_t(az, ze) p_d^T
/// with element n * M + m = A(m, a) * D(n, d), unit norm.
struct AngleDelayDictionary {
  int Ny = 0, Nz = 0, Nc = 0;
  int G_az = 0, G_ze = 0, G_d = 0;
  double Ts = 0;
  std::vector<double> az, ze, delays;
  Eigen::MatrixXcd A;  // M x (G_az G_ze), column i * G_ze + j is (az[i], ze[j]) / sqrt(M)
  Eigen::MatrixXcd D;  // Nc x G_d, column d is exp(-j 2 pi n tau_d / (Nc Ts)) / sqrt(Nc)

  static AngleDelayDictionary make(const chan::SystemConfig& cfg, int G_az, int G_ze, int G_d);

  int angle_atoms() const { return G_az * G_ze; }
  std::int64_t atoms() const { return static_cast<std::int64_t>(angle_atoms()) * G_d; }
  int angle_of(std::int64_t atom) const { return static_cast<int>(atom / G_d); }
  int delay_of(std::int64_t atom) const { return static_cast<int>(atom % G_d); }
  std::int64_t atom(int angle, int delay) const { return static_cast<std::int64_t>(angle) * G_d + delay; }
  /// Grid point of an atom as a unit-gain path.
  chan::Path path_of(std::int64_t atom) const;
  /// Unit-norm channel-space column, length M Nc.
  Eigen::VectorXcd column(std::int64_t atom) const;
  /// Unit-modulus array responses (the analog codebook), M x (G_az G_ze).
  Eigen::MatrixXcd codebook() const;
};

struct OmpStop {
  int max_paths = 2;
  /// Stop once the mean residual power per (whitened) measurement is at or
  /// below this.
  double residual = 1e-12;
};

struct OmpEstimate {
  Eigen::MatrixXcd H;                 // M x Nc reconstruction
  std::vector<std::int64_t> support;  // combined atom indices, selection order
  Eigen::VectorXcd coeffs;           // one per support atom
  chan::PathSet paths;                // the same estimate as paths (rebuilds H exactly)
  int iterations = 0;
  bool regularized = false;
};

/// Simultaneous OMP over all subcarriers. `Y` is rows x Nc (column n holds
/// subcarrier n), `Phi` is the rows x M sensing matrix and `noise_cov`, if
/// given, the rows x rows noise covariance used for whitening. Each pass
/// selects the atom of largest normalized correlation with the residual
/// summed coherently over the subcarriers, re-fits every gain by least
/// squares, then revisits each selected atom with the others held fixed.
OmpEstimate sw_omp_estimate(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& Phi, const AngleDelayDictionary& dict,
                            const OmpStop& stop, const Eigen::MatrixXcd* noise_cov = nullptr);

/// ||H_est - H||_F^2 / ||H||_F^2 in dB, summed over users.
double nmse_db(const chan::ChannelRealization& truth, const chan::ChannelRealization& estimate);

/// Per-subcarrier zero forcing F[n] = H^H (H H^H)^-1, every column scaled to
/// power Pt / (Nc K).
std::vector<Eigen::MatrixXcd> zf_fully_digital(const chan::ChannelRealization& ch, double Pt);

/// Sparse hybrid beamformer: greedy selection of K codebook atoms against the
/// per-subcarrier ZF target, least-squares digital part.
link::HybridBeamformer ss_hb(const chan::ChannelRealization& ch, const Eigen::MatrixXcd& codebook, double Pt);

/// Principal-component hybrid beamformer: analog column k is the phase of
/// user k's dominant left singular vector, digital part ZF on the effective
/// channel with equal per-user power.
link::HybridBeamformer pca_hb(const chan::ChannelRealization& ch, double Pt);

struct ScalarQuantizer {
  int bits = 0;
  std::vector<double> levels;  // ascending

  std::size_t index(double x) const;
  double quantize(double x) const { return levels[index(x)]; }
  double mse(const std::vector<double>& samples) const;
};

/// Lloyd-max design on empirical samples: seeded k-means++ start, then
/// alternating partition/centroid updates until no level moves by more than
/// `tol`. Zero bits gives the sample mean.
ScalarQuantizer lloyd_max(std::vector<double> samples, int bits, std::uint64_t seed = 1, double tol = 1e-6,
                          int max_iter = 10000);

enum PathParam { kReAlpha = 0, kImAlpha, kTheta, kPhi, kTau, kPathParams };

/// Bits for each of the 5 Lp path parameters (path-major order) under an
/// even split of B_total. When B_total < 5 Lp the first B_total slots get
/// one bit and `short_budget` is set.
struct BitAllocation {
  std::vector<int> bits;
  bool short_budget = false;
  int total() const;
};
BitAllocation allocate_feedback_bits(int B_total, int Lp);

/// Lloyd-max codebooks for every path parameter, trained on the paths of a
/// set of channel realizations.
class PathParameterQuantizer {
 public:
  PathParameterQuantizer() = default;
  PathParameterQuantizer(const std::vector<chan::ChannelRealization>& training, const std::vector<int>& bit_values,
                         std::uint64_t seed = 1);
  const ScalarQuantizer& codebook(PathParam p, int bits) const;
  /// Quantizes path parameters slot by slot with the given allocation;
  /// paths beyond the allocation are dropped.
  chan::PathSet quantize(const chan::PathSet& paths, const std::vector<int>& allocation) const;

 private:
  std::map<int, std::array<ScalarQuantizer, kPathParams>> books_;
};

/// User-side SW-OMP estimate, parameter feedback and BS-side rebuild.
/// `quantizer` null means unquantized feedback.
Eigen::MatrixXcd limited_feedback_reconstruct(const OmpEstimate& est, const PathParameterQuantizer* quantizer,
                                              const std::vector<int>& allocation, const chan::SystemConfig& cfg);

enum class Scheme { proposed_tdd, proposed_fdd, swomp_pca, swomp_ss, perfect_pca, perfect_ss, zf_bound, limited_feedback_pca };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);
bool is_learned(Scheme s);

enum class PilotKind { fdd, tdd };

/// Everything a classical scheme needs besides the realization itself.
struct BaselineSetup {
  chan::SystemConfig cfg;
  PilotKind pilots = PilotKind::fdd;
  AngleDelayDictionary dict;
  Eigen::MatrixXcd codebook;    // unit-modulus analog atoms for SS-HB
  Eigen::MatrixXd pilot_phase;  // Q x M (fdd) or QK x M (tdd)
  OmpStop stop;
  BitAllocation allocation;
  PathParameterQuantizer quantizer;
};

struct BaselineOptions {
  int G_az = 64;
  int G_ze = 64;
  int G_d = 0;  // 0: Nc
  int max_paths = 0;  // 0: cfg.Lp.hi
  PilotKind pilots = PilotKind::fdd;
  int lloyd_training = 20000;  // channel realizations used for the codebooks
};

/// Draws the pilot phases and trains the feedback codebooks from streams of
/// `seed` that no dataset split uses.
BaselineSetup make_baseline_setup(const chan::SystemConfig& cfg, const BaselineOptions& opts, std::uint64_t seed);

/// Per-user SW-OMP estimates from noisy pilots drawn with `rng`.
std::vector<OmpEstimate> estimate_channels(const BaselineSetup& setup, const chan::ChannelRealization& ch, Rng& rng);

/// Sum rate of a classical scheme on one realization; `rng` draws the pilot
/// noise for the estimated-CSI schemes.
double baseline_rate(Scheme scheme, const BaselineSetup& setup, const chan::ChannelRealization& ch, Rng& rng);

}  // namespace airbeam::base
