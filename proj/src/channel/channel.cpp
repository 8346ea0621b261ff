#include "airbeam/channel/channel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "airbeam/common/binio.hpp"

namespace airbeam::chan {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2;

int draw_int(const IntRange& r, Rng& rng) {
  if (r.fixed()) return r.lo;
  return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
}

// Keeps jittered cluster rays inside the open angular support.
double clip_angle(double a) {
  const double lim = kHalfPi - 1e-12;
  return std::clamp(a, -lim, lim);
}
}  // namespace

Eigen::VectorXcd array_response(double theta, double phi, int Ny, int Nz) {
  Eigen::VectorXcd a(Ny * Nz);
  const double uy = std::sin(theta) * std::cos(phi);
  const double uz = std::sin(phi);
  for (int m = 0; m < Nz; ++m) {
    for (int n = 0; n < Ny; ++n) a(m * Ny + n) = std::polar(1.0, kPi * (n * uy + m * uz));
  }
  return a;
}

Eigen::MatrixXcd evaluate_paths(const PathSet& paths, int Ny, int Nz, int Nc, double Ts) {
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(Ny * Nz, Nc);
  if (paths.empty()) return H;
  for (const auto& p : paths) {
    const Eigen::VectorXcd a = p.alpha * array_response(p.theta, p.phi, Ny, Nz);
    for (int n = 0; n < Nc; ++n) H.col(n) += a * std::polar(1.0, -2 * kPi * n * p.tau / (Nc * Ts));
  }
  return H / std::sqrt(static_cast<double>(paths.size()));
}

ChannelRealization gen_multipath_channel(const SystemConfig& cfg, Rng& rng) {
  ChannelRealization out;
  out.users.resize(cfg.K);
  const double tau_max = cfg.Nc * cfg.Ts / 4.0;
  for (auto& u : out.users) {
    const int lp = draw_int(cfg.Lp, rng);
    u.paths.resize(lp);
    for (auto& p : u.paths) {
      p.theta = uniform(rng, -kHalfPi, kHalfPi);
      p.phi = uniform(rng, -kHalfPi, kHalfPi);
      p.tau = uniform(rng, 0.0, tau_max);
      p.alpha = complex_normal(rng, 1.0);
    }
    u.H = evaluate_paths(u.paths, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
  }
  return out;
}

ChannelRealization gen_cluster_channel(const SystemConfig& cfg, Rng& rng) {
  ChannelRealization out;
  out.users.resize(cfg.K);
  const double tau_max = cfg.Nc * cfg.Ts / 4.0;
  const double tau_cap = std::nextafter(cfg.Nc * cfg.Ts, 0.0);
  const bool one_ring = cfg.channel_kind == ChannelKind::one_ring;
  for (auto& u : out.users) {
    const int jc = one_ring ? 1 : draw_int(cfg.Jc, rng);
    const int jp = draw_int(cfg.Jp, rng);
    u.paths.reserve(static_cast<std::size_t>(jc * jp));
    for (int c = 0; c < jc; ++c) {
      const double theta_c = uniform(rng, -kHalfPi, kHalfPi);
      const double phi_c = uniform(rng, -kHalfPi, kHalfPi);
      const double tau_c = uniform(rng, 0.0, tau_max);
      for (int r = 0; r < jp; ++r) {
        Path p;
        p.alpha = complex_normal(rng, 1.0);
        p.theta = theta_c;
        p.phi = phi_c;
        p.tau = tau_c;
        if (cfg.sigma_theta > 0) {
          p.theta = clip_angle(theta_c + uniform(rng, -cfg.sigma_theta, cfg.sigma_theta));
          p.phi = clip_angle(phi_c + uniform(rng, -cfg.sigma_theta, cfg.sigma_theta));
        }
        if (cfg.sigma_tau > 0) p.tau = std::min(tau_c + uniform(rng, 0.0, cfg.sigma_tau), tau_cap);
        u.paths.push_back(p);
      }
    }
    u.H = evaluate_paths(u.paths, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
  }
  return out;
}

ChannelRealization gen_channel(const SystemConfig& cfg, Rng& rng) {
  if (cfg.channel_kind == ChannelKind::multipath) return gen_multipath_channel(cfg, rng);
  return gen_cluster_channel(cfg, rng);
}

void awgn(Eigen::MatrixXcd& x, double sigma2, Rng& rng) {
  if (sigma2 < 0) throw std::invalid_argument("awgn: negative noise power");
  if (sigma2 == 0) return;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += complex_normal(rng, sigma2);
  }
}

Eigen::MatrixXcd dft_matrix(int n) {
  Eigen::MatrixXcd F(n, n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      // reduce the exponent first so large n keeps full precision
      const long long e = (static_cast<long long>(p) * q) % n;
      F(p, q) = std::polar(s, -2 * kPi * static_cast<double>(e) / n);
    }
  }
  return F;
}

Eigen::MatrixXcd dft_delay_transform(const Eigen::MatrixXcd& Y) {
  if (Y.rows() < 1) throw std::invalid_argument("dft_delay_transform: empty subcarrier axis");
  return dft_matrix(static_cast<int>(Y.rows())) * Y;
}

Eigen::MatrixXcd idft_delay_transform(const Eigen::MatrixXcd& Y) {
  if (Y.rows() < 1) throw std::invalid_argument("idft_delay_transform: empty subcarrier axis");
  return dft_matrix(static_cast<int>(Y.rows())).adjoint() * Y;
}

void write_dataset(const std::filesystem::path& path, const SystemConfig& cfg,
                   const std::vector<ChannelRealization>& samples) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("ABDS", 4);
  binio::write_le<std::uint32_t>(os, kDatasetVersion);
  binio::write_string(os, cfg.snapshot());
  binio::write_le<std::uint64_t>(os, samples.size());
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.K));
  for (const auto& s : samples) {
    if (static_cast<int>(s.users.size()) != cfg.K) throw std::invalid_argument("write_dataset: user count != K");
    for (const auto& u : s.users) {
      binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(u.paths.size()));
      for (const auto& p : u.paths) {
        binio::write_le(os, p.alpha.real());
        binio::write_le(os, p.alpha.imag());
        binio::write_le(os, p.theta);
        binio::write_le(os, p.phi);
        binio::write_le(os, p.tau);
      }
      binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(u.H.rows()));
      binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(u.H.cols()));
      for (Eigen::Index i = 0; i < u.H.rows(); ++i) {
        for (Eigen::Index j = 0; j < u.H.cols(); ++j) {
          binio::write_le(os, u.H(i, j).real());
          binio::write_le(os, u.H(i, j).imag());
        }
      }
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ChannelRealization> read_dataset(const std::filesystem::path& path, SystemConfig* cfg_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "ABDS") {
    throw binio::FormatError(path.string() + " is not a dataset cache");
  }
  const auto version = binio::read_le<std::uint32_t>(is, "dataset version");
  if (version != kDatasetVersion) {
    throw binio::FormatError("dataset format version " + std::to_string(version) + " does not match supported version " +
                             std::to_string(kDatasetVersion));
  }
  const SystemConfig cfg = SystemConfig::from_snapshot(binio::read_string(is, "config snapshot"));
  if (cfg_out) *cfg_out = cfg;
  const auto count = binio::read_le<std::uint64_t>(is, "sample count");
  const auto users = binio::read_le<std::uint32_t>(is, "user count");
  if (users > 4096) throw binio::FormatError("implausible user count");
  std::vector<ChannelRealization> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t s = 0; s < count; ++s) {
    ChannelRealization r;
    r.users.resize(users);
    for (auto& u : r.users) {
      const auto np = binio::read_le<std::uint32_t>(is, "path count");
      if (np > 1u << 16) throw binio::FormatError("implausible path count");
      u.paths.resize(np);
      for (auto& p : u.paths) {
        const double re = binio::read_le<double>(is, "path gain");
        const double im = binio::read_le<double>(is, "path gain");
        p.alpha = {re, im};
        p.theta = binio::read_le<double>(is, "path angle");
        p.phi = binio::read_le<double>(is, "path angle");
        p.tau = binio::read_le<double>(is, "path delay");
      }
      const auto rows = binio::read_le<std::uint32_t>(is, "channel rows");
      const auto cols = binio::read_le<std::uint32_t>(is, "channel cols");
      if (static_cast<std::uint64_t>(rows) * cols > (1u << 26)) throw binio::FormatError("implausible channel size");
      u.H.resize(rows, cols);
      for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
          const double re = binio::read_le<double>(is, "channel entry");
          const double im = binio::read_le<double>(is, "channel entry");
          u.H(i, j) = {re, im};
        }
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace airbeam::chan
