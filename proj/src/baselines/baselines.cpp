#include "airbeam/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "airbeam/common/log.hpp"

namespace airbeam::base {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2 * std::numbers::pi;
constexpr std::uint64_t kPilotPurpose = 0xBA5E1;
constexpr std::uint64_t kLloydPurpose = 0xBA5E2;
constexpr std::uint64_t kLloydInitPurpose = 0xBA5E3;
constexpr std::size_t kSwapCandidates = 8;

std::vector<double> uniform_grid(int G) {
  std::vector<double> g(static_cast<std::size_t>(G));
  for (int i = 0; i < G; ++i) g[i] = -kPi / 2 + kPi * (i + 0.5) / G;
  return g;
}

double wrap_phase(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0) w += kTwoPi;
  return w >= kTwoPi ? 0.0 : w;
}

Eigen::MatrixXd phases_of(const Eigen::MatrixXcd& F) {
  return F.unaryExpr([](const cd& z) { return wrap_phase(std::arg(z)); });
}

// Per-subcarrier user matrix: row k is h_{k,n}^H.
Eigen::MatrixXcd user_matrix(const chan::ChannelRealization& ch, int n) {
  const int K = static_cast<int>(ch.users.size());
  const auto M = ch.users[0].H.rows();
  Eigen::MatrixXcd Hn(K, M);
  for (int k = 0; k < K; ++k) Hn.row(k) = ch.users[k].H.col(n).adjoint();
  return Hn;
}

// Right inverse of a K x N matrix, regularized when it is rank deficient.
Eigen::MatrixXcd right_inverse(const Eigen::MatrixXcd& H, const char* who) {
  Eigen::MatrixXcd gram = H * H.adjoint();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(gram);
  if (!lu.isInvertible()) {
    warn_once(std::string(who) + ": singular Gram matrix, using a regularized inverse");
    const double delta = 1e-10 * std::max(gram.trace().real() / std::max<Eigen::Index>(1, gram.rows()), 1e-300);
    gram += delta * Eigen::MatrixXcd::Identity(gram.rows(), gram.cols());
    return H.adjoint() * gram.ldlt().solve(Eigen::MatrixXcd::Identity(gram.rows(), gram.cols()));
  }
  return H.adjoint() * lu.inverse();
}

// Scales column j of `digital` so that ||front * digital(:, j)|| = sqrt(p).
void equalize_columns(const Eigen::MatrixXcd& front, Eigen::MatrixXcd& digital, double p) {
  for (Eigen::Index j = 0; j < digital.cols(); ++j) {
    const double n = (front * digital.col(j)).norm();
    if (n > 0) digital.col(j) *= std::sqrt(p) / n;
  }
}

struct Whitened {
  Eigen::MatrixXcd Y;
  Eigen::MatrixXcd Psi;   // rows x angle atoms
  Eigen::VectorXd norms;  // column norms of Psi
};

// Least-squares fit of vec(Y) on the support; returns coefficients and residual.
struct Fit {
  Eigen::VectorXcd x;
  Eigen::MatrixXcd R;
  double energy = 0;
  bool regularized = false;
};

Fit fit_support(const Whitened& w, const AngleDelayDictionary& dict, const std::vector<std::int64_t>& support) {
  const auto rows = w.Y.rows();
  const auto Nc = w.Y.cols();
  Fit f;
  if (support.empty()) {
    f.R = w.Y;
    f.energy = w.Y.squaredNorm();
    return f;
  }
  Eigen::MatrixXcd Theta(rows * Nc, static_cast<Eigen::Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    const auto psi = w.Psi.col(dict.angle_of(support[s]));
    const auto p = dict.D.col(dict.delay_of(support[s]));
    for (Eigen::Index n = 0; n < Nc; ++n) Theta.block(n * rows, static_cast<Eigen::Index>(s), rows, 1) = psi * p(n);
  }
  const Eigen::Map<const Eigen::VectorXcd> y(w.Y.data(), rows * Nc);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(Theta);
  if (qr.rank() < Theta.cols()) {
    f.regularized = true;
    const Eigen::MatrixXcd g =
        Theta.adjoint() * Theta + 1e-8 * Eigen::MatrixXcd::Identity(Theta.cols(), Theta.cols());
    f.x = g.ldlt().solve(Theta.adjoint() * y);
  } else {
    f.x = qr.solve(y);
  }
  const Eigen::VectorXcd r = y - Theta * f.x;
  f.R = Eigen::Map<const Eigen::MatrixXcd>(r.data(), rows, Nc);
  f.energy = r.squaredNorm();
  return f;
}

// The `count` atoms of largest normalized correlation with R, best first,
// skipping `exclude`.
std::vector<std::int64_t> best_atoms(const Whitened& w, const AngleDelayDictionary& dict, const Eigen::MatrixXcd& R,
                                     const std::vector<std::int64_t>& exclude, std::size_t count) {
  const Eigen::MatrixXcd C = (w.Psi.adjoint() * R) * dict.D.conjugate();  // angles x delays
  std::vector<std::pair<double, std::int64_t>> top;  // ascending score, at most count entries
  for (int a = 0; a < dict.angle_atoms(); ++a) {
    if (!(w.norms(a) > 0)) continue;
    for (int d = 0; d < dict.G_d; ++d) {
      const double s = std::abs(C(a, d)) / w.norms(a);
      if (top.size() == count && !(s > top.front().first)) continue;
      const auto id = dict.atom(a, d);
      if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
      // strict comparison keeps the lower index first among equal scores
      auto pos = std::upper_bound(top.begin(), top.end(), s,
                                  [](double v, const std::pair<double, std::int64_t>& e) { return v <= e.first; });
      top.insert(pos, {s, id});
      if (top.size() > count) top.erase(top.begin());
    }
  }
  std::vector<std::int64_t> out;
  for (auto it = top.rbegin(); it != top.rend(); ++it) out.push_back(it->second);
  return out;
}

}  // namespace

AngleDelayDictionary AngleDelayDictionary::make(const chan::SystemConfig& cfg, int G_az, int G_ze, int G_d) {
  if (G_az < 1 || G_ze < 1 || G_d < 1) throw std::invalid_argument("dictionary grid sizes must be >= 1");
  AngleDelayDictionary d;
  d.Ny = cfg.Ny;
  d.Nz = cfg.Nz;
  d.Nc = cfg.Nc;
  d.G_az = G_az;
  d.G_ze = G_ze;
  d.G_d = G_d;
  d.Ts = cfg.Ts;
  d.az = uniform_grid(G_az);
  d.ze = uniform_grid(G_ze);
  d.delays.resize(static_cast<std::size_t>(G_d));
  for (int i = 0; i < G_d; ++i) d.delays[i] = i * cfg.Nc * cfg.Ts / G_d;
  const int M = cfg.M();
  d.A.resize(M, G_az * G_ze);
  for (int i = 0; i < G_az; ++i)
    for (int j = 0; j < G_ze; ++j)
      d.A.col(i * G_ze + j) = chan::array_response(d.az[i], d.ze[j], cfg.Ny, cfg.Nz) / std::sqrt(double(M));
  d.D.resize(cfg.Nc, G_d);
  for (int k = 0; k < G_d; ++k)
    for (int n = 0; n < cfg.Nc; ++n)
      d.D(n, k) = std::polar(1.0 / std::sqrt(double(cfg.Nc)), -kTwoPi * n * d.delays[k] / (cfg.Nc * cfg.Ts));
  return d;
}

chan::Path AngleDelayDictionary::path_of(std::int64_t atom) const {
  const int a = angle_of(atom);
  chan::Path p;
  p.alpha = 1.0;
  p.theta = az[a / G_ze];
  p.phi = ze[a % G_ze];
  p.tau = delays[delay_of(atom)];
  return p;
}

Eigen::VectorXcd AngleDelayDictionary::column(std::int64_t atom) const {
  const auto M = A.rows();
  Eigen::VectorXcd c(M * Nc);
  for (int n = 0; n < Nc; ++n) c.segment(n * M, M) = A.col(angle_of(atom)) * D(n, delay_of(atom));
  return c;
}

Eigen::MatrixXcd AngleDelayDictionary::codebook() const { return A * std::sqrt(static_cast<double>(A.rows())); }

OmpEstimate sw_omp_estimate(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& Phi, const AngleDelayDictionary& dict,
                            const OmpStop& stop, const Eigen::MatrixXcd* noise_cov) {
  const auto M = dict.A.rows();
  if (Phi.cols() != M || Y.rows() != Phi.rows() || Y.cols() != dict.Nc) {
    throw std::invalid_argument("sw_omp_estimate: measurement, sensing matrix and dictionary shapes disagree");
  }
  Whitened w;
  if (noise_cov) {
    Eigen::LLT<Eigen::MatrixXcd> llt(*noise_cov);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("sw_omp_estimate: noise covariance is not positive definite");
    const auto L = llt.matrixL();
    w.Y = L.solve(Y);
    w.Psi = L.solve(Phi) * dict.A;
  } else {
    w.Y = Y;
    w.Psi = Phi * dict.A;
  }
  w.norms = w.Psi.colwise().norm().transpose();
  const double per = static_cast<double>(Y.size());

  OmpEstimate est;
  Fit fit = fit_support(w, dict, {});
  while (static_cast<int>(est.support.size()) < stop.max_paths && fit.energy / per > stop.residual) {
    const auto pick = best_atoms(w, dict, fit.R, est.support, 1);
    if (pick.empty()) break;
    est.support.push_back(pick[0]);
    fit = fit_support(w, dict, est.support);
    ++est.iterations;
    // revisit each pick against the residual of the others, trying the few
    // strongest candidates since neighbouring atoms can be nearly collinear
    for (int sweep = 0; sweep < 3 && est.support.size() > 1; ++sweep) {
      bool changed = false;
      for (std::size_t l = 0; l < est.support.size(); ++l) {
        auto others = est.support;
        others.erase(others.begin() + static_cast<std::ptrdiff_t>(l));
        const Fit partial = fit_support(w, dict, others);
        for (const auto cand : best_atoms(w, dict, partial.R, est.support, kSwapCandidates)) {
          auto trial = est.support;
          trial[l] = cand;
          Fit tf = fit_support(w, dict, trial);
          if (tf.energy < fit.energy * (1 - 1e-9)) {
            est.support = std::move(trial);
            fit = std::move(tf);
            changed = true;
          }
        }
      }
      if (!changed || fit.energy / per <= stop.residual) break;
    }
  }
  est.regularized = fit.regularized;
  if (fit.regularized) warn_once("sw_omp_estimate: rank-deficient least squares, regularized with lambda = 1e-8");

  const double L = static_cast<double>(est.support.size());
  est.coeffs = est.support.empty() ? Eigen::VectorXcd() : fit.x;
  for (std::size_t s = 0; s < est.support.size(); ++s) {
    chan::Path p = dict.path_of(est.support[s]);
    p.alpha = fit.x(static_cast<Eigen::Index>(s)) * std::sqrt(L / (static_cast<double>(M) * dict.Nc));
    est.paths.push_back(p);
  }
  est.H = chan::evaluate_paths(est.paths, dict.Ny, dict.Nz, dict.Nc, dict.Ts);
  return est;
}

double nmse_db(const chan::ChannelRealization& truth, const chan::ChannelRealization& estimate) {
  double err = 0, ref = 0;
  for (std::size_t k = 0; k < truth.users.size(); ++k) {
    err += (estimate.users[k].H - truth.users[k].H).squaredNorm();
    ref += truth.users[k].H.squaredNorm();
  }
  return 10 * std::log10(err / ref);
}

std::vector<Eigen::MatrixXcd> zf_fully_digital(const chan::ChannelRealization& ch, double Pt) {
  const int K = static_cast<int>(ch.users.size());
  const int Nc = static_cast<int>(ch.users[0].H.cols());
  if (K > ch.users[0].H.rows()) throw std::invalid_argument("zf_fully_digital: needs K <= M");
  std::vector<Eigen::MatrixXcd> F;
  F.reserve(Nc);
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(ch.users[0].H.rows(), ch.users[0].H.rows());
  for (int n = 0; n < Nc; ++n) {
    Eigen::MatrixXcd f = right_inverse(user_matrix(ch, n), "zf_fully_digital");
    equalize_columns(I, f, Pt / (Nc * K));
    F.push_back(std::move(f));
  }
  return F;
}

link::HybridBeamformer ss_hb(const chan::ChannelRealization& ch, const Eigen::MatrixXcd& codebook, double Pt) {
  const int K = static_cast<int>(ch.users.size());
  const int Nc = static_cast<int>(ch.users[0].H.cols());
  if (codebook.cols() < K) throw std::invalid_argument("ss_hb: codebook has fewer atoms than users");
  const auto target = zf_fully_digital(ch, Pt);
  auto residual = target;
  const auto M = codebook.rows();
  Eigen::MatrixXcd F_RF(M, 0);
  std::vector<Eigen::Index> chosen;
  std::vector<Eigen::MatrixXcd> fbb(Nc);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(codebook.cols());
    for (int n = 0; n < Nc; ++n) score += (codebook.adjoint() * residual[n]).rowwise().squaredNorm();
    for (auto c : chosen) score(c) = -1;
    Eigen::Index best = 0;
    score.maxCoeff(&best);
    chosen.push_back(best);
    F_RF.conservativeResize(M, k + 1);
    F_RF.col(k) = codebook.col(best);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(F_RF);
    for (int n = 0; n < Nc; ++n) {
      fbb[n] = qr.solve(target[n]);
      residual[n] = target[n] - F_RF * fbb[n];
      const double r = residual[n].norm();
      if (r > 0) residual[n] /= r;
    }
  }
  const double cap = std::sqrt(Pt / Nc);
  for (auto& f : fbb) {
    const double n = (F_RF * f).norm();
    if (n > 0) f *= cap / n;
  }
  return link::make_hybrid(phases_of(F_RF), fbb, Pt);
}

link::HybridBeamformer pca_hb(const chan::ChannelRealization& ch, double Pt) {
  const int K = static_cast<int>(ch.users.size());
  const int Nc = static_cast<int>(ch.users[0].H.cols());
  const auto M = ch.users[0].H.rows();
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(M, K);
  for (int k = 0; k < K; ++k) {
    const auto& H = ch.users[k].H;
    if (H.squaredNorm() == 0) {
      warn_once("pca_hb: zero channel, analog phases fall back to 0");
      continue;
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU);
    Eigen::VectorXcd u = svd.matrixU().col(0);
    // pin the arbitrary global phase so that the first antenna is at phase 0
    Eigen::Index ref = 0;
    if (std::abs(u(0)) < 1e-12) u.cwiseAbs().maxCoeff(&ref);
    u *= std::conj(u(ref)) / std::abs(u(ref));
    theta.col(k) = u.unaryExpr([](const cd& z) { return wrap_phase(std::arg(z)); });
  }
  const Eigen::MatrixXcd F_RF = link::assemble_analog(theta);
  std::vector<Eigen::MatrixXcd> fbb;
  fbb.reserve(Nc);
  for (int n = 0; n < Nc; ++n) {
    const Eigen::MatrixXcd G = user_matrix(ch, n) * F_RF;  // K x K effective channel
    Eigen::MatrixXcd f = right_inverse(G, "pca_hb");
    equalize_columns(F_RF, f, Pt / (Nc * K));
    fbb.push_back(std::move(f));
  }
  return link::make_hybrid(theta, fbb, Pt);
}

std::size_t ScalarQuantizer::index(double x) const {
  if (levels.empty()) throw std::logic_error("ScalarQuantizer: empty codebook");
  const auto it = std::lower_bound(levels.begin(), levels.end(), x);
  if (it == levels.begin()) return 0;
  if (it == levels.end()) return levels.size() - 1;
  const auto hi = static_cast<std::size_t>(it - levels.begin());
  // ties go to the lower level
  return (x - levels[hi - 1] <= *it - x) ? hi - 1 : hi;
}

double ScalarQuantizer::mse(const std::vector<double>& samples) const {
  double s = 0;
  for (double x : samples) {
    const double e = x - quantize(x);
    s += e * e;
  }
  return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
}

ScalarQuantizer lloyd_max(std::vector<double> samples, int bits, std::uint64_t seed, double tol, int max_iter) {
  if (samples.empty()) throw std::invalid_argument("lloyd_max: no training samples");
  if (bits < 0 || bits > 20) throw std::invalid_argument("lloyd_max: bits must lie in [0, 20]");
  std::sort(samples.begin(), samples.end());
  ScalarQuantizer q;
  q.bits = bits;
  const std::size_t n = samples.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + samples[i];
  if (bits == 0) {
    q.levels = {prefix[n] / static_cast<double>(n)};
    return q;
  }
  const std::size_t k = std::size_t{1} << bits;

  // k-means++ seeding
  Rng rng(seed);
  std::vector<double> centers;
  centers.push_back(samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (samples[i] - c) * (samples[i] - c));
      d2[i] = best;
      total += best;
    }
    if (!(total > 0)) {
      centers.push_back(centers.back());  // fewer distinct samples than levels
      continue;
    }
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u < 0) {
        pick = i;
        break;
      }
    }
    centers.push_back(samples[pick]);
  }
  std::sort(centers.begin(), centers.end());

  for (int it = 0; it < max_iter; ++it) {
    double moved = 0;
    std::vector<double> next = centers;
    std::size_t lo = 0;
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t hi = n;
      if (j + 1 < k) {
        const double edge = 0.5 * (centers[j] + centers[j + 1]);
        hi = static_cast<std::size_t>(std::upper_bound(samples.begin() + static_cast<std::ptrdiff_t>(lo), samples.end(), edge) -
                                      samples.begin());
      }
      if (hi > lo) next[j] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
      moved = std::max(moved, std::abs(next[j] - centers[j]));
      lo = hi;
    }
    centers = std::move(next);
    if (moved < tol) break;
  }
  q.levels = std::move(centers);
  return q;
}

int BitAllocation::total() const { return std::accumulate(bits.begin(), bits.end(), 0); }

BitAllocation allocate_feedback_bits(int B_total, int Lp) {
  if (Lp < 1) throw std::invalid_argument("allocate_feedback_bits: Lp must be >= 1");
  if (B_total < 0) throw std::invalid_argument("allocate_feedback_bits: negative bit budget");
  BitAllocation a;
  const int slots = kPathParams * Lp;
  const int each = B_total / slots;
  a.bits.assign(static_cast<std::size_t>(slots), each);
  if (each == 0) {
    a.short_budget = true;
    for (int i = 0; i < B_total; ++i) a.bits[static_cast<std::size_t>(i)] = 1;
  }
  return a;
}

PathParameterQuantizer::PathParameterQuantizer(const std::vector<chan::ChannelRealization>& training,
                                               const std::vector<int>& bit_values, std::uint64_t seed) {
  std::array<std::vector<double>, kPathParams> values;
  for (const auto& r : training) {
    for (const auto& u : r.users) {
      for (const auto& p : u.paths) {
        values[kReAlpha].push_back(p.alpha.real());
        values[kImAlpha].push_back(p.alpha.imag());
        values[kTheta].push_back(p.theta);
        values[kPhi].push_back(p.phi);
        values[kTau].push_back(p.tau);
      }
    }
  }
  for (int bits : std::set<int>(bit_values.begin(), bit_values.end())) {
    auto& books = books_[bits];
    for (int p = 0; p < kPathParams; ++p) books[p] = lloyd_max(values[p], bits, stream_seed(seed, kLloydInitPurpose, p, bits));
  }
}

const ScalarQuantizer& PathParameterQuantizer::codebook(PathParam p, int bits) const {
  const auto it = books_.find(bits);
  if (it == books_.end()) throw std::out_of_range("no codebook trained for " + std::to_string(bits) + " bits");
  return it->second[p];
}

chan::PathSet PathParameterQuantizer::quantize(const chan::PathSet& paths, const std::vector<int>& allocation) const {
  const std::size_t n = std::min(paths.size(), allocation.size() / kPathParams);
  chan::PathSet out;
  out.reserve(n);
  for (std::size_t l = 0; l < n; ++l) {
    const int* b = &allocation[l * kPathParams];
    const auto& p = paths[l];
    chan::Path q;
    q.alpha = {codebook(kReAlpha, b[kReAlpha]).quantize(p.alpha.real()),
               codebook(kImAlpha, b[kImAlpha]).quantize(p.alpha.imag())};
    q.theta = codebook(kTheta, b[kTheta]).quantize(p.theta);
    q.phi = codebook(kPhi, b[kPhi]).quantize(p.phi);
    q.tau = codebook(kTau, b[kTau]).quantize(p.tau);
    out.push_back(q);
  }
  return out;
}

Eigen::MatrixXcd limited_feedback_reconstruct(const OmpEstimate& est, const PathParameterQuantizer* quantizer,
                                              const std::vector<int>& allocation, const chan::SystemConfig& cfg) {
  if (!quantizer) return chan::evaluate_paths(est.paths, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
  return chan::evaluate_paths(quantizer->quantize(est.paths, allocation), cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::proposed_tdd: return "proposed_tdd";
    case Scheme::proposed_fdd: return "proposed_fdd";
    case Scheme::swomp_pca: return "swomp_pca";
    case Scheme::swomp_ss: return "swomp_ss";
    case Scheme::perfect_pca: return "perfect_pca";
    case Scheme::perfect_ss: return "perfect_ss";
    case Scheme::zf_bound: return "zf_bound";
    case Scheme::limited_feedback_pca: return "limited_feedback_pca";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  for (auto v : {Scheme::proposed_tdd, Scheme::proposed_fdd, Scheme::swomp_pca, Scheme::swomp_ss, Scheme::perfect_pca,
                 Scheme::perfect_ss, Scheme::zf_bound, Scheme::limited_feedback_pca}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

bool is_learned(Scheme s) { return s == Scheme::proposed_tdd || s == Scheme::proposed_fdd; }

BaselineSetup make_baseline_setup(const chan::SystemConfig& cfg, const BaselineOptions& opts, std::uint64_t seed) {
  cfg.validate();
  BaselineSetup s;
  s.cfg = cfg;
  s.pilots = opts.pilots;
  s.dict = AngleDelayDictionary::make(cfg, opts.G_az, opts.G_ze, opts.G_d > 0 ? opts.G_d : cfg.Nc);
  s.codebook = s.dict.codebook();
  const int rows = opts.pilots == PilotKind::fdd ? cfg.Q : cfg.Q * cfg.K;
  Rng prng = make_stream(seed, kPilotPurpose);
  s.pilot_phase.resize(rows, cfg.M());
  for (int r = 0; r < rows; ++r)
    for (int m = 0; m < cfg.M(); ++m) s.pilot_phase(r, m) = uniform(prng, 0.0, kTwoPi);
  int paths = opts.max_paths;
  if (paths <= 0) paths = cfg.channel_kind == chan::ChannelKind::multipath ? cfg.Lp.hi : (cfg.channel_kind == chan::ChannelKind::one_ring ? 1 : cfg.Jc.hi);
  s.stop.max_paths = paths;
  s.allocation = allocate_feedback_bits(cfg.B, paths);
  if (s.allocation.short_budget) {
    warn_once("limited feedback: " + std::to_string(cfg.B) + " bits cannot give every one of the " +
              std::to_string(kPathParams * paths) + " path parameters a bit");
  }
  std::vector<chan::ChannelRealization> training(static_cast<std::size_t>(std::max(1, opts.lloyd_training)));
  for (std::size_t i = 0; i < training.size(); ++i) {
    Rng rng = make_stream(seed, kLloydPurpose, i);
    training[i] = chan::gen_channel(cfg, rng);
  }
  s.quantizer = PathParameterQuantizer(training, s.allocation.bits, seed);
  return s;
}

std::vector<OmpEstimate> estimate_channels(const BaselineSetup& setup, const chan::ChannelRealization& ch, Rng& rng) {
  const auto& cfg = setup.cfg;
  const double sigma2 = chan::sigma_from_snr(cfg);
  std::vector<OmpEstimate> out;
  out.reserve(ch.users.size());
  if (setup.pilots == PilotKind::fdd) {
    const auto Y = link::fdd_downlink_pilots(setup.pilot_phase, ch, sigma2, rng, cfg.Pt);
    const Eigen::MatrixXcd X = link::fdd_pilot_matrix(setup.pilot_phase, cfg.Pt, cfg.Nc);
    for (const auto& y : Y) out.push_back(sw_omp_estimate(y, X, setup.dict, setup.stop));
  } else {
    const auto Y = link::tdd_uplink_pilots(setup.pilot_phase, ch, sigma2, rng);
    const Eigen::MatrixXcd W = link::tdd_combiner(setup.pilot_phase);
    const Eigen::MatrixXcd cov = sigma2 * W * W.adjoint();
    for (const auto& y : Y) out.push_back(sw_omp_estimate(y, W, setup.dict, setup.stop, &cov));
  }
  return out;
}

double baseline_rate(Scheme scheme, const BaselineSetup& setup, const chan::ChannelRealization& ch, Rng& rng) {
  const auto& cfg = setup.cfg;
  const double sigma2 = chan::sigma_from_snr(cfg);
  auto estimated = [&](bool quantized) {
    const auto est = estimate_channels(setup, ch, rng);
    chan::ChannelRealization hat;
    hat.users.resize(est.size());
    for (std::size_t k = 0; k < est.size(); ++k) {
      hat.users[k].paths = est[k].paths;
      hat.users[k].H = quantized ? limited_feedback_reconstruct(est[k], &setup.quantizer, setup.allocation.bits, cfg)
                                 : est[k].H;
    }
    return hat;
  };
  switch (scheme) {
    case Scheme::zf_bound: return link::sum_rate_digital(ch, zf_fully_digital(ch, cfg.Pt), sigma2);
    case Scheme::perfect_pca: return link::sum_rate(ch, pca_hb(ch, cfg.Pt), sigma2);
    case Scheme::perfect_ss: return link::sum_rate(ch, ss_hb(ch, setup.codebook, cfg.Pt), sigma2);
    case Scheme::swomp_pca: return link::sum_rate(ch, pca_hb(estimated(false), cfg.Pt), sigma2);
    case Scheme::swomp_ss: return link::sum_rate(ch, ss_hb(estimated(false), setup.codebook, cfg.Pt), sigma2);
    case Scheme::limited_feedback_pca: return link::sum_rate(ch, pca_hb(estimated(true), cfg.Pt), sigma2);
    case Scheme::proposed_tdd:
    case Scheme::proposed_fdd: break;
  }
  throw std::invalid_argument(std::string("baseline_rate: ") + to_string(scheme) + " is a learned scheme");
}

}  // namespace airbeam::base
