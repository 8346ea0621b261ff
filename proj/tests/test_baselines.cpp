#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "airbeam/baselines/baselines.hpp"

using namespace airbeam;
using namespace airbeam::base;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

Eigen::MatrixXd random_phases(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd p(rows, cols);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = uniform(rng, 0, kTwoPi);
  return p;
}

// Delay bins reachable by the channel model's delay support [0, Nc Ts / 4).
int delay_bins(const AngleDelayDictionary& d) {
  int n = 0;
  while (n < d.G_d && d.delays[n] < d.Nc * d.Ts / 4) ++n;
  return n;
}

// On-grid paths, one per listed delay bin, random angle atoms and gains.
chan::PathSet on_grid_paths(const AngleDelayDictionary& d, const std::vector<int>& bins, Rng& rng,
                            std::vector<std::int64_t>* atoms) {
  chan::PathSet ps;
  for (int b : bins) {
    const int a = std::uniform_int_distribution<int>(0, d.angle_atoms() - 1)(rng);
    atoms->push_back(d.atom(a, b));
    auto p = d.path_of(atoms->back());
    p.alpha = complex_normal(rng, 1.0);
    ps.push_back(p);
  }
  return ps;
}

double rel_err_db(const Eigen::MatrixXcd& est, const Eigen::MatrixXcd& truth) {
  return 10 * std::log10((est - truth).squaredNorm() / truth.squaredNorm());
}

chan::ChannelRealization single_path_user(const chan::SystemConfig& cfg, const chan::Path& p) {
  chan::ChannelRealization ch;
  ch.users.resize(1);
  ch.users[0].paths = {p};
  ch.users[0].H = chan::evaluate_paths(ch.users[0].paths, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
  return ch;
}

double interference(const chan::ChannelRealization& ch, const std::vector<Eigen::MatrixXcd>& F) {
  double worst = 0;
  for (std::size_t n = 0; n < F.size(); ++n)
    for (std::size_t k = 0; k < ch.users.size(); ++k) {
      const Eigen::RowVectorXcd g = ch.users[k].H.col(static_cast<Eigen::Index>(n)).adjoint() * F[n];
      for (Eigen::Index j = 0; j < g.size(); ++j)
        if (j != static_cast<Eigen::Index>(k)) worst = std::max(worst, std::norm(g(j)) / std::norm(g(k)));
    }
  return worst;
}

std::vector<Eigen::MatrixXcd> full_precoders(const link::HybridBeamformer& bf) {
  std::vector<Eigen::MatrixXcd> F;
  for (const auto& fb : bf.F_BB) F.push_back(bf.F_RF * fb);
  return F;
}

void check_invariants(const link::HybridBeamformer& bf, double Pt, int Nc) {
  CHECK((bf.F_RF.cwiseAbs().array() - 1).abs().maxCoeff() <= 1e-12);
  REQUIRE(bf.F_BB.size() == static_cast<std::size_t>(Nc));
  for (const auto& fb : bf.F_BB) CHECK((bf.F_RF * fb).norm() <= std::sqrt(Pt / Nc) + 1e-12);
}

}  // namespace

TEST_CASE("dictionary columns are unit norm and rebuild their grid paths") {
  chan::SystemConfig cfg;
  const auto d = AngleDelayDictionary::make(cfg, 8, 6, cfg.Nc);
  CHECK(d.atoms() == 8 * 6 * cfg.Nc);
  for (std::int64_t a = 0; a < d.atoms(); a += 7) {
    const auto c = d.column(a);
    CHECK(c.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const Eigen::MatrixXcd H = chan::evaluate_paths({d.path_of(a)}, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
    const Eigen::Map<const Eigen::VectorXcd> h(H.data(), H.size());
    CHECK((h / std::sqrt(double(cfg.M() * cfg.Nc)) - c).norm() <= 1e-12);
  }
  CHECK((d.codebook().cwiseAbs().array() - 1).abs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(AngleDelayDictionary::make(cfg, 0, 4, 4), std::invalid_argument);
}

TEST_CASE("sw-omp recovers noiseless on-grid channels exactly") {
  chan::SystemConfig cfg;
  Rng rng(11);
  const auto d = AngleDelayDictionary::make(cfg, 32, 32, cfg.Nc);
  REQUIRE(delay_bins(d) >= 2);
  for (int L : {1, 2}) {
    for (int t = 0; t < 25; ++t) {
      const Eigen::MatrixXcd X = link::fdd_pilot_matrix(random_phases(cfg.Q, cfg.M(), rng), cfg.Pt, cfg.Nc);
      std::vector<int> bins;
      if (L == 1) bins = {std::uniform_int_distribution<int>(0, delay_bins(d) - 1)(rng)};
      else bins = {0, 1};
      std::vector<std::int64_t> truth;
      const auto ps = on_grid_paths(d, bins, rng, &truth);
      const Eigen::MatrixXcd H = chan::evaluate_paths(ps, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
      OmpStop stop;
      stop.max_paths = L;
      const auto est = sw_omp_estimate(X * H, X, d, stop);
      auto got = est.support;
      std::sort(got.begin(), got.end());
      std::sort(truth.begin(), truth.end());
      CHECK(got == truth);
      CHECK(rel_err_db(est.H, H) <= -50);
      CHECK_FALSE(est.regularized);
    }
  }
}

TEST_CASE("sw-omp with whitening recovers a noiseless tdd channel") {
  chan::SystemConfig cfg;
  Rng rng(12);
  const auto d = AngleDelayDictionary::make(cfg, 16, 16, cfg.Nc);
  const Eigen::MatrixXcd W = link::tdd_combiner(random_phases(cfg.Q * cfg.K, cfg.M(), rng));
  const Eigen::MatrixXcd cov = 0.3 * W * W.adjoint();
  std::vector<std::int64_t> truth;
  const auto ps = on_grid_paths(d, {1}, rng, &truth);
  const Eigen::MatrixXcd H = chan::evaluate_paths(ps, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
  OmpStop stop;
  stop.max_paths = 1;
  const auto est = sw_omp_estimate(W * H, W, d, stop, &cov);
  CHECK(est.support == truth);
  CHECK(rel_err_db(est.H, H) <= -50);
}

TEST_CASE("sw-omp on a zero measurement gives an empty estimate") {
  chan::SystemConfig cfg;
  Rng rng(13);
  const auto d = AngleDelayDictionary::make(cfg, 8, 8, cfg.Nc);
  const Eigen::MatrixXcd X = link::fdd_pilot_matrix(random_phases(cfg.Q, cfg.M(), rng), cfg.Pt, cfg.Nc);
  const auto est = sw_omp_estimate(Eigen::MatrixXcd::Zero(cfg.Q, cfg.Nc), X, d, OmpStop{});
  CHECK(est.support.empty());
  CHECK(est.paths.empty());
  CHECK(est.H.norm() == 0.0);
  CHECK_THROWS_AS(sw_omp_estimate(Eigen::MatrixXcd::Zero(cfg.Q + 1, cfg.Nc), X, d, OmpStop{}), std::invalid_argument);
}

TEST_CASE("sw-omp error falls as the angle grid is refined") {
  chan::SystemConfig cfg;
  std::vector<double> nmse;
  for (int G : {32, 64, 128}) {
    const auto d = AngleDelayDictionary::make(cfg, G, G, cfg.Nc);
    Rng rng(14);
    double acc = 0;
    const int n = 20;
    for (int t = 0; t < n; ++t) {
      const Eigen::MatrixXcd X = link::fdd_pilot_matrix(random_phases(cfg.Q, cfg.M(), rng), cfg.Pt, cfg.Nc);
      chan::Path p;
      p.theta = uniform(rng, -1.4, 1.4);
      p.phi = uniform(rng, -1.4, 1.4);
      p.tau = d.delays[std::uniform_int_distribution<int>(0, delay_bins(d) - 1)(rng)];
      p.alpha = complex_normal(rng, 1.0);
      const Eigen::MatrixXcd H = chan::evaluate_paths({p}, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
      OmpStop stop;
      stop.max_paths = 1;
      acc += (sw_omp_estimate(X * H, X, d, stop).H - H).squaredNorm() / H.squaredNorm();
    }
    nmse.push_back(10 * std::log10(acc / n));
  }
  CHECK(nmse[1] < nmse[0]);
  CHECK(nmse[2] < nmse[1]);
}

TEST_CASE("zero forcing matches the single-user closed form and nulls interference") {
  chan::SystemConfig cfg;
  cfg.K = 1;
  Rng rng(15);
  const auto ch = chan::gen_channel(cfg, rng);
  const double s2 = chan::sigma_from_snr(cfg);
  double expect = 0;
  for (int n = 0; n < cfg.Nc; ++n) expect += std::log2(1 + cfg.Pt * ch.users[0].H.col(n).squaredNorm() / (cfg.Nc * s2));
  expect /= cfg.Nc;
  CHECK(link::sum_rate_digital(ch, zf_fully_digital(ch, cfg.Pt), s2) == doctest::Approx(expect).epsilon(1e-12));

  chan::SystemConfig c2;
  c2.K = 3;
  for (int t = 0; t < 10; ++t) {
    const auto ch2 = chan::gen_channel(c2, rng);
    const auto F = zf_fully_digital(ch2, c2.Pt);
    CHECK(interference(ch2, F) <= 1e-12);
    for (const auto& f : F)
      for (Eigen::Index j = 0; j < f.cols(); ++j)
        CHECK(f.col(j).squaredNorm() == doctest::Approx(c2.Pt / (c2.Nc * c2.K)).epsilon(1e-12));
  }
}

TEST_CASE("fully digital zf dominates both hybrid designs") {
  chan::SystemConfig cfg;
  const auto codebook = AngleDelayDictionary::make(cfg, 64, 64, cfg.Nc).codebook();
  const double s2 = chan::sigma_from_snr(cfg);
  Rng rng(16);
  for (int t = 0; t < 100; ++t) {
    const auto ch = chan::gen_channel(cfg, rng);
    const double zf = link::sum_rate_digital(ch, zf_fully_digital(ch, cfg.Pt), s2);
    CHECK(zf >= link::sum_rate(ch, pca_hb(ch, cfg.Pt), s2));
    CHECK(zf >= link::sum_rate(ch, ss_hb(ch, codebook, cfg.Pt), s2));
  }
}

TEST_CASE("ss-hb picks the true atom for an on-grid single path") {
  chan::SystemConfig cfg;
  cfg.K = 1;
  const auto d = AngleDelayDictionary::make(cfg, 16, 16, cfg.Nc);
  const auto codebook = d.codebook();
  Rng rng(17);
  const double s2 = chan::sigma_from_snr(cfg);
  for (int t = 0; t < 10; ++t) {
    const int a = std::uniform_int_distribution<int>(0, d.angle_atoms() - 1)(rng);
    auto p = d.path_of(d.atom(a, 0));
    p.alpha = complex_normal(rng, 1.0);
    const auto ch = single_path_user(cfg, p);
    const auto bf = ss_hb(ch, codebook, cfg.Pt);
    CHECK((bf.F_RF.col(0) - codebook.col(a)).norm() <= 1e-9);
    const double zf = link::sum_rate_digital(ch, zf_fully_digital(ch, cfg.Pt), s2);
    CHECK(link::sum_rate(ch, bf, s2) >= 0.85 * zf);
    check_invariants(bf, cfg.Pt, cfg.Nc);
  }
}

TEST_CASE("pca-hb takes the steering phases for a single path") {
  chan::SystemConfig cfg;
  cfg.K = 1;
  Rng rng(18);
  for (int t = 0; t < 10; ++t) {
    chan::Path p;
    p.theta = uniform(rng, -1.5, 1.5);
    p.phi = uniform(rng, -1.5, 1.5);
    p.tau = uniform(rng, 0, cfg.Nc * cfg.Ts / 4);
    p.alpha = complex_normal(rng, 1.0);
    const auto ch = single_path_user(cfg, p);
    const auto bf = pca_hb(ch, cfg.Pt);
    const Eigen::VectorXcd a = chan::array_response(p.theta, p.phi, cfg.Ny, cfg.Nz);
    // array element 0 has phase 0, so the pinned phases are the steering phases
    CHECK((bf.F_RF.col(0) - a).norm() <= 1e-9);
    check_invariants(bf, cfg.Pt, cfg.Nc);
  }
}

TEST_CASE("pca-hb nulls inter-user interference") {
  chan::SystemConfig cfg;
  Rng rng(19);
  for (int t = 0; t < 20; ++t) {
    const auto ch = chan::gen_channel(cfg, rng);
    const auto bf = pca_hb(ch, cfg.Pt);
    CHECK(interference(ch, full_precoders(bf)) <= 1e-9);
    check_invariants(bf, cfg.Pt, cfg.Nc);
    check_invariants(ss_hb(ch, AngleDelayDictionary::make(cfg, 16, 16, cfg.Nc).codebook(), cfg.Pt), cfg.Pt, cfg.Nc);
  }
}

TEST_CASE("estimated-csi hybrids point at a noiseless on-grid path") {
  chan::SystemConfig cfg;
  cfg.K = 1;
  const auto d = AngleDelayDictionary::make(cfg, 32, 32, cfg.Nc);
  Rng rng(20);
  for (int t = 0; t < 10; ++t) {
    std::vector<std::int64_t> atoms;
    const auto ps = on_grid_paths(d, {0}, rng, &atoms);
    const auto ch = single_path_user(cfg, ps[0]);
    const Eigen::MatrixXcd X = link::fdd_pilot_matrix(random_phases(cfg.Q, cfg.M(), rng), cfg.Pt, cfg.Nc);
    OmpStop stop;
    stop.max_paths = 1;
    const auto est = sw_omp_estimate(X * ch.users[0].H, X, d, stop);
    chan::ChannelRealization hat = ch;
    hat.users[0].H = est.H;
    const Eigen::VectorXcd a = chan::array_response(ps[0].theta, ps[0].phi, cfg.Ny, cfg.Nz);
    for (const auto& bf : {pca_hb(hat, cfg.Pt), ss_hb(hat, d.codebook(), cfg.Pt)}) {
      CHECK(std::abs(a.dot(bf.F_RF.col(0))) / (a.norm() * bf.F_RF.col(0).norm()) >= 0.999);
    }
  }
}

TEST_CASE("lloyd-max designs") {
  std::vector<double> u;
  for (int i = 0; i < 10000; ++i) u.push_back((i + 0.5) / 10000);
  const auto q1 = lloyd_max(u, 1);
  REQUIRE(q1.levels.size() == 2);
  CHECK(q1.levels[0] == doctest::Approx(0.25).epsilon(1e-3));
  CHECK(q1.levels[1] == doctest::Approx(0.75).epsilon(1e-3));

  const auto two = lloyd_max({-3.0, 5.0, -3.0, 5.0}, 1);
  CHECK(two.levels == std::vector<double>{-3.0, 5.0});
  CHECK(lloyd_max({1.0, 2.0, 6.0}, 0).levels == std::vector<double>{3.0});

  Rng rng(21);
  std::vector<double> g;
  for (int i = 0; i < 5000; ++i) g.push_back(standard_normal(rng));
  double prev = lloyd_max(g, 0).mse(g);
  for (int b = 1; b <= 6; ++b) {
    const auto q = lloyd_max(g, b, 7);
    CHECK(q.levels.size() == (std::size_t{1} << b));
    CHECK(std::is_sorted(q.levels.begin(), q.levels.end()));
    const double m = q.mse(g);
    CHECK(m <= prev + 1e-15);
    prev = m;
  }
  CHECK(lloyd_max(g, 4, 9).levels == lloyd_max(g, 4, 9).levels);

  ScalarQuantizer q{1, {0.0, 1.0}};
  CHECK(q.quantize(0.5) == 0.0);  // midpoint goes low
  CHECK(q.quantize(0.5000001) == 1.0);
  CHECK(q.quantize(-7) == 0.0);
  CHECK(q.quantize(7) == 1.0);
  CHECK_THROWS_AS(lloyd_max({}, 2), std::invalid_argument);
}

TEST_CASE("feedback bit allocation") {
  const auto a = allocate_feedback_bits(30, 2);
  CHECK(a.bits == std::vector<int>(10, 3));
  CHECK_FALSE(a.short_budget);
  CHECK(a.total() == 30);
  CHECK(allocate_feedback_bits(34, 2).total() == 30);
  const auto s = allocate_feedback_bits(7, 2);
  CHECK(s.short_budget);
  CHECK(s.total() == 7);
  CHECK(s.bits[6] == 1);
  CHECK(s.bits[7] == 0);
  CHECK_THROWS_AS(allocate_feedback_bits(10, 0), std::invalid_argument);
}

TEST_CASE("limited feedback reconstruction") {
  chan::SystemConfig cfg;
  BaselineOptions opt;
  opt.G_az = opt.G_ze = 16;
  opt.lloyd_training = 500;
  const auto setup = make_baseline_setup(cfg, opt, 3);
  Rng rng(22);
  const auto ch = chan::gen_channel(cfg, rng);
  const auto est = estimate_channels(setup, ch, rng);
  for (const auto& e : est) CHECK(limited_feedback_reconstruct(e, nullptr, {}, cfg) == e.H);

  std::vector<chan::ChannelRealization> training;
  for (int i = 0; i < 500; ++i) training.push_back(chan::gen_channel(cfg, rng));
  const PathParameterQuantizer pq(training, {1, 2, 4, 8}, 5);
  std::vector<double> nmse;
  Rng eval(23);
  std::vector<chan::ChannelRealization> chans;
  std::vector<std::vector<OmpEstimate>> ests;
  for (int t = 0; t < 60; ++t) {
    chans.push_back(chan::gen_channel(cfg, eval));
    ests.push_back(estimate_channels(setup, chans.back(), eval));
  }
  for (int B : {10, 20, 40, 80}) {
    const auto alloc = allocate_feedback_bits(B, 2);
    double err = 0, ref = 0;
    for (std::size_t t = 0; t < chans.size(); ++t)
      for (std::size_t k = 0; k < ests[t].size(); ++k) {
        err += (limited_feedback_reconstruct(ests[t][k], &pq, alloc.bits, cfg) - chans[t].users[k].H).squaredNorm();
        ref += chans[t].users[k].H.squaredNorm();
      }
    nmse.push_back(10 * std::log10(err / ref));
  }
  for (std::size_t i = 1; i < nmse.size(); ++i) CHECK(nmse[i] <= nmse[i - 1]);
  CHECK_THROWS_AS(pq.codebook(kTheta, 3), std::out_of_range);
}

TEST_CASE("perfect csi beats estimated csi on average") {
  chan::SystemConfig cfg;
  BaselineOptions opt;
  opt.lloyd_training = 500;
  const auto setup = make_baseline_setup(cfg, opt, 4);
  Rng rng(24);
  double perfect = 0, estimated = 0, lf = 0;
  for (int t = 0; t < 30; ++t) {
    const auto ch = chan::gen_channel(cfg, rng);
    Rng n1 = make_stream(5, 1, t), n2 = make_stream(5, 2, t), n3 = make_stream(5, 3, t);
    perfect += baseline_rate(Scheme::perfect_pca, setup, ch, n1);
    estimated += baseline_rate(Scheme::swomp_pca, setup, ch, n2);
    lf += baseline_rate(Scheme::limited_feedback_pca, setup, ch, n3);
  }
  CHECK(perfect > estimated);
  CHECK(estimated > lf);
  Rng r(1);
  CHECK_THROWS_AS(baseline_rate(Scheme::proposed_fdd, setup, chan::gen_channel(cfg, r), r), std::invalid_argument);
}

TEST_CASE("baseline setup defaults and scheme names") {
  chan::SystemConfig cfg;
  cfg.Lp = {1, 3};
  BaselineOptions opt;
  opt.G_az = opt.G_ze = 8;
  opt.lloyd_training = 50;
  CHECK(make_baseline_setup(cfg, opt, 1).stop.max_paths == 3);
  cfg.channel_kind = chan::ChannelKind::one_ring;
  CHECK(make_baseline_setup(cfg, opt, 1).stop.max_paths == 1);
  cfg.channel_kind = chan::ChannelKind::cluster;
  CHECK(make_baseline_setup(cfg, opt, 1).stop.max_paths == cfg.Jc.hi);
  opt.pilots = PilotKind::tdd;
  const auto s = make_baseline_setup(cfg, opt, 1);
  CHECK(s.pilot_phase.rows() == cfg.Q * cfg.K);
  CHECK(make_baseline_setup(cfg, opt, 1).pilot_phase == s.pilot_phase);

  for (auto v : {Scheme::proposed_tdd, Scheme::proposed_fdd, Scheme::swomp_pca, Scheme::swomp_ss, Scheme::perfect_pca,
                 Scheme::perfect_ss, Scheme::zf_bound, Scheme::limited_feedback_pca})
    CHECK(scheme_from_string(to_string(v)) == v);
  CHECK(is_learned(Scheme::proposed_tdd));
  CHECK_FALSE(is_learned(Scheme::zf_bound));
  CHECK_THROWS_AS(scheme_from_string("mo_hb"), std::invalid_argument);
}
