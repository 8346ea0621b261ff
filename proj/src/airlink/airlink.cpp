#include "airbeam/airlink/airlink.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace airbeam::link {

namespace {
constexpr double kTwoPi = 2 * std::numbers::pi;

Eigen::MatrixXcd unit_phases(const Eigen::MatrixXd& phi, double scale) {
  Eigen::MatrixXcd out(phi.rows(), phi.cols());
  for (Eigen::Index j = 0; j < phi.cols(); ++j)
    for (Eigen::Index i = 0; i < phi.rows(); ++i) out(i, j) = std::polar(scale, phi(i, j));
  return out;
}

void check_users(const chan::ChannelRealization& ch, Eigen::Index M) {
  if (ch.users.empty()) throw std::invalid_argument("channel has no users");
  for (const auto& u : ch.users) {
    if (u.H.rows() != M) {
      throw std::invalid_argument("channel has " + std::to_string(u.H.rows()) + " antennas, pilots expect " +
                                  std::to_string(M));
    }
  }
}
}  // namespace

Eigen::MatrixXcd tdd_combiner(const Eigen::MatrixXd& phi) {
  return unit_phases(phi, 1.0 / std::sqrt(static_cast<double>(phi.cols())));
}

Eigen::MatrixXcd fdd_pilot_matrix(const Eigen::MatrixXd& phi, double Pt, int Nc) {
  return unit_phases(phi, std::sqrt(Pt / (static_cast<double>(phi.cols()) * Nc)));
}

std::vector<Eigen::MatrixXcd> tdd_uplink_pilots(const Eigen::MatrixXd& phi, const chan::ChannelRealization& ch,
                                                double sigma2, Rng& rng) {
  check_users(ch, phi.cols());
  const Eigen::MatrixXcd W = tdd_combiner(phi);
  std::vector<Eigen::MatrixXcd> out;
  for (const auto& u : ch.users) {
    Eigen::MatrixXcd noisy = u.H;
    chan::awgn(noisy, sigma2, rng);
    out.push_back(W * noisy);
  }
  return out;
}

std::vector<Eigen::MatrixXcd> fdd_downlink_pilots(const Eigen::MatrixXd& phi, const chan::ChannelRealization& ch,
                                                  double sigma2, Rng& rng, double Pt) {
  check_users(ch, phi.cols());
  const int Nc = static_cast<int>(ch.users[0].H.cols());
  const Eigen::MatrixXcd X = fdd_pilot_matrix(phi, Pt, Nc);
  std::vector<Eigen::MatrixXcd> out;
  for (const auto& u : ch.users) {
    Eigen::MatrixXcd y = X * u.H;
    chan::awgn(y, sigma2, rng);
    out.push_back(std::move(y));
  }
  return out;
}

Eigen::MatrixXcd assemble_analog(const Eigen::MatrixXd& theta) { return unit_phases(theta, 1.0); }

std::vector<Eigen::MatrixXcd> normalize_digital(const Eigen::MatrixXcd& F_RF, const std::vector<Eigen::MatrixXcd>& F_bar,
                                                double Pt, int Nc) {
  const double cap = std::sqrt(Pt / Nc);
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(F_bar.size());
  for (const auto& f : F_bar) {
    const double n = (F_RF * f).norm();
    out.push_back(n > cap ? Eigen::MatrixXcd(f * (cap / n)) : f);
  }
  return out;
}

HybridBeamformer make_hybrid(const Eigen::MatrixXd& theta, const std::vector<Eigen::MatrixXcd>& F_bar, double Pt) {
  HybridBeamformer bf;
  bf.theta = theta;
  bf.F_RF = assemble_analog(theta);
  bf.F_BB = normalize_digital(bf.F_RF, F_bar, Pt, static_cast<int>(F_bar.size()));
  return bf;
}

double sum_rate_digital(const chan::ChannelRealization& ch, const std::vector<Eigen::MatrixXcd>& F, double sigma2) {
  if (!(sigma2 > 0)) throw std::invalid_argument("sum_rate: noise power must be positive");
  const int K = static_cast<int>(ch.users.size());
  const int Nc = static_cast<int>(F.size());
  double rate = 0;
  for (int n = 0; n < Nc; ++n) {
    if (F[n].cols() != K || F[n].rows() != ch.users[0].H.rows()) {
      throw std::invalid_argument("sum_rate: precoder shape does not match the channel");
    }
    for (int k = 0; k < K; ++k) {
      // h^H F gives the gains of every stream at user k
      const Eigen::RowVectorXcd g = ch.users[k].H.col(n).adjoint() * F[n];
      const double sig = std::norm(g(k));
      double interf = 0;
      for (int j = 0; j < K; ++j)
        if (j != k) interf += std::norm(g(j));
      rate += std::log2(1.0 + sig / (interf + sigma2));
    }
  }
  return rate / Nc;
}

double sum_rate(const chan::ChannelRealization& ch, const HybridBeamformer& bf, double sigma2) {
  std::vector<Eigen::MatrixXcd> F;
  F.reserve(bf.F_BB.size());
  for (const auto& fb : bf.F_BB) F.push_back(bf.F_RF * fb);
  return sum_rate_digital(ch, F, sigma2);
}

double quantize_phase(double theta, int bits) {
  if (bits <= 0) throw std::invalid_argument("quantize_phase: bits must be >= 1");
  double w = std::fmod(theta, kTwoPi);
  if (w < 0) w += kTwoPi;
  if (w >= kTwoPi) w = 0;
  const long long levels = 1LL << bits;
  const double step = kTwoPi / static_cast<double>(levels);
  long long i = static_cast<long long>(std::floor(w / step));
  if (i >= levels) i = levels - 1;
  const double lower = static_cast<double>(i) * step;
  const double upper = static_cast<double>(i + 1) * step;
  if (w - lower <= upper - w) return lower;
  return i + 1 == levels ? 0.0 : upper;
}

Eigen::MatrixXd quantize_phases(const Eigen::MatrixXd& theta, int bits) {
  return theta.unaryExpr([bits](double t) { return quantize_phase(t, bits); });
}

double phase_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

FeedbackMessage quantize_bits(const std::vector<double>& v) {
  FeedbackMessage m;
  m.bits.reserve(v.size());
  for (double x : v) m.bits.push_back(quantize_bit(x));
  return m;
}

}  // namespace airbeam::link
