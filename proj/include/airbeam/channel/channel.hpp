#pragma once

#include <Eigen/Dense>
#include <complex>
#include <filesystem>
#include <vector>

#include "airbeam/channel/config.hpp"
#include "airbeam/common/rng.hpp"

namespace airbeam::chan {

using cd = std::complex<double>;

struct Path {
  cd alpha;
  double theta = 0;  // azimuth AoD, radians
  double phi = 0;    // zenith AoD, radians
  double tau = 0;    // delay, seconds
};

using PathSet = std::vector<Path>;

struct UserChannel {
  PathSet paths;
  Eigen::MatrixXcd H;  // M x Nc, column n is subcarrier n
};

struct ChannelRealization {
  std::vector<UserChannel> users;
};

/// UPA steering vector for half-wavelength spacing; the y-axis index
/// varies fastest in the flattened vector.
Eigen::VectorXcd array_response(double theta, double phi, int Ny, int Nz);

/// Frequency-domain channel of one user from its paths, normalized by
/// 1/sqrt(number of paths).
Eigen::MatrixXcd evaluate_paths(const PathSet& paths, int Ny, int Nz, int Nc, double Ts);

/// Sparse multipath draw: Lp from cfg.Lp, alpha ~ CN(0,1), angles
/// U(-pi/2, pi/2), delays U[0, Nc Ts / 4).
ChannelRealization gen_multipath_channel(const SystemConfig& cfg, Rng& rng);

/// Clustered draw with Jc clusters of Jp rays each around uniform centers.
/// Setting `one_ring` uses a single cluster.
ChannelRealization gen_cluster_channel(const SystemConfig& cfg, Rng& rng);

/// Dispatches on cfg.channel_kind.
ChannelRealization gen_channel(const SystemConfig& cfg, Rng& rng);

/// Adds CN(0, sigma2) noise to every entry.
void awgn(Eigen::MatrixXcd& x, double sigma2, Rng& rng);

/// Unitary DFT of size n: F[p][q] = exp(-j 2 pi p q / n) / sqrt(n).
Eigen::MatrixXcd dft_matrix(int n);

/// Subcarrier-to-delay transform F * Y of an Nc x cols matrix, and its inverse.
Eigen::MatrixXcd dft_delay_transform(const Eigen::MatrixXcd& Y);
Eigen::MatrixXcd idft_delay_transform(const Eigen::MatrixXcd& Y);

// Dataset cache layout (little-endian):
//   "ABDS" | u32 version | str config snapshot | u64 samples | u32 users
//   per sample, per user: u32 paths | paths x (f64 re a, im a, theta, phi, tau)
//                         | u32 M | u32 Nc | M*Nc x (f64 re, f64 im), row-major
inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(const std::filesystem::path& path, const SystemConfig& cfg,
                   const std::vector<ChannelRealization>& samples);
/// Returns the samples; `cfg_out` receives the embedded config if non-null.
std::vector<ChannelRealization> read_dataset(const std::filesystem::path& path, SystemConfig* cfg_out = nullptr);

}  // namespace airbeam::chan
