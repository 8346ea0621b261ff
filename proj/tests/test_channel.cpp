#include <cmath>
#include <filesystem>
#include <numbers>

#include "airbeam/channel/channel.hpp"
#include "doctest.h"

using namespace airbeam;
using namespace airbeam::chan;
constexpr double kPi = std::numbers::pi;

TEST_CASE("array response") {
  auto a0 = array_response(0, 0, 4, 3);
  CHECK(a0.size() == 12);
  CHECK((a0 - Eigen::VectorXcd::Ones(12)).norm() < 1e-15);
  auto a1 = array_response(kPi / 2, 0, 2, 1);
  CHECK(std::abs(a1(0) - cd(1, 0)) < 1e-15);
  CHECK(std::abs(a1(1) - cd(-1, 0)) < 1e-15);

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const double th = uniform(rng, -kPi / 2, kPi / 2), ph = uniform(rng, -kPi / 2, kPi / 2);
    auto a = array_response(th, ph, 8, 8);
    for (int m = 0; m < 8; ++m) {
      for (int n = 0; n < 8; ++n) {
        const double arg = kPi * (n * std::sin(th) * std::cos(ph) + m * std::sin(ph));
        CHECK(std::abs(a(m * 8 + n) - cd(std::cos(arg), std::sin(arg))) < 1e-12);
      }
    }
  }
}

TEST_CASE("multipath channel matches direct evaluation") {
  SystemConfig cfg;
  cfg.Lp = {1, 1};
  PathSet one{{cd(1, 0), 0.3, -0.2, 0.0}};
  auto H = evaluate_paths(one, cfg.Ny, cfg.Nz, cfg.Nc, cfg.Ts);
  const auto a = array_response(0.3, -0.2, cfg.Ny, cfg.Nz);
  for (int n = 0; n < cfg.Nc; ++n) CHECK((H.col(n) - a).norm() < 1e-13);

  PathSet delayed{{cd(1, 0), 0.0, 0.0, cfg.Ts}};
  auto Hd = evaluate_paths(delayed, 1, 1, 4, cfg.Ts);
  for (int n = 0; n < 4; ++n) CHECK(std::abs(Hd(0, n) - std::polar(1.0, -kPi * n / 2)) < 1e-14);

  cfg.Lp = {1, 8};
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    auto r = gen_multipath_channel(cfg, rng);
    REQUIRE(r.users.size() == 2u);
    for (const auto& u : r.users) {
      CHECK(u.H.rows() == 16);
      CHECK(u.H.cols() == 8);
      const double L = static_cast<double>(u.paths.size());
      for (int n = 0; n < cfg.Nc; ++n) {
        for (int i = 0; i < 16; ++i) {
          cd direct = 0;
          const int n_y = i % cfg.Ny, m_z = i / cfg.Ny;
          for (const auto& p : u.paths) {
            const double arg = kPi * (n_y * std::sin(p.theta) * std::cos(p.phi) + m_z * std::sin(p.phi)) -
                               2 * kPi * n * p.tau / (cfg.Nc * cfg.Ts);
            direct += p.alpha * cd(std::cos(arg), std::sin(arg));
          }
          direct /= std::sqrt(L);
          CHECK(std::abs(u.H(i, n) - direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
        }
      }
    }
  }
}

TEST_CASE("path draws respect their supports and power normalization") {
  SystemConfig cfg;
  cfg.Ny = 2;
  cfg.Nz = 2;
  cfg.Nc = 4;
  cfg.K = 1;
  cfg.Lp = {1, 8};
  Rng rng(5);
  double power = 0;
  long entries = 0;
  int lp_min = 100, lp_max = 0;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    auto r = gen_multipath_channel(cfg, rng);
    const auto& u = r.users[0];
    lp_min = std::min<int>(lp_min, static_cast<int>(u.paths.size()));
    lp_max = std::max<int>(lp_max, static_cast<int>(u.paths.size()));
    for (const auto& p : u.paths) {
      CHECK_MESSAGE((p.theta > -kPi / 2 && p.theta < kPi / 2), "theta");
      CHECK_MESSAGE((p.phi > -kPi / 2 && p.phi < kPi / 2), "phi");
      CHECK_MESSAGE((p.tau >= 0 && p.tau < cfg.Nc * cfg.Ts / 4), "tau");
    }
    power += u.H.squaredNorm();
    entries += u.H.size();
  }
  CHECK(lp_min == 1);
  CHECK(lp_max == 8);
  CHECK(power / entries == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("cluster channel") {
  SystemConfig cfg;
  cfg.channel_kind = ChannelKind::cluster;
  cfg.Jc = {1, 1};
  cfg.Jp = {1, 1};
  cfg.sigma_theta = 0;
  cfg.sigma_tau = 0;
  SystemConfig mp = cfg;
  mp.channel_kind = ChannelKind::multipath;
  mp.Lp = {1, 1};
  Rng r1(9), r2(9);
  auto a = gen_cluster_channel(cfg, r1);
  auto b = gen_multipath_channel(mp, r2);
  for (int k = 0; k < cfg.K; ++k) CHECK((a.users[k].H - b.users[k].H).norm() == 0.0);

  SystemConfig ring;
  ring.channel_kind = ChannelKind::one_ring;
  ring.Jp = {100, 100};
  Rng r3(1);
  auto c = gen_channel(ring, r3);
  CHECK(c.users[0].paths.size() == 100u);
  double th_min = 10, th_max = -10;
  for (const auto& p : c.users[0].paths) {
    th_min = std::min(th_min, p.theta);
    th_max = std::max(th_max, p.theta);
  }
  CHECK(th_max - th_min <= 2 * ring.sigma_theta + 1e-12);

  SystemConfig cl;
  cl.channel_kind = ChannelKind::cluster;
  cl.Jc = {4, 4};
  cl.Jp = {10, 10};
  cl.K = 1;
  Rng r4(2);
  double power = 0;
  long n = 0;
  for (int t = 0; t < 2000; ++t) {
    auto r = gen_channel(cl, r4);
    CHECK(r.users[0].paths.size() == 40u);
    for (const auto& p : r.users[0].paths) CHECK((p.tau >= 0 && p.tau < cl.Nc * cl.Ts));
    power += r.users[0].H.squaredNorm();
    n += r.users[0].H.size();
  }
  CHECK(power / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("noise power from snr") {
  SystemConfig cfg;
  cfg.Pt = cfg.Nc;
  cfg.snr_db = 0;
  CHECK(sigma_from_snr(cfg) == doctest::Approx(1.0));
  cfg.snr_db = 10;
  CHECK(sigma_from_snr(cfg) == doctest::Approx(0.1));
  cfg.snr_sqrt_literal = true;
  CHECK(sigma_from_snr(cfg) == doctest::Approx(0.01));
}

TEST_CASE("awgn statistics") {
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Constant(3, 2, cd(1, 2));
  Rng rng(1);
  auto y = x;
  awgn(y, 0.0, rng);
  CHECK((y - x).norm() == 0.0);

  const int n = 1000000;
  Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n, 1);
  awgn(z, 0.5, rng);
  double var = 0, rr = 0, ii = 0, ri = 0;
  for (int i = 0; i < n; ++i) {
    var += std::norm(z(i));
    rr += z(i).real() * z(i).real();
    ii += z(i).imag() * z(i).imag();
    ri += z(i).real() * z(i).imag();
  }
  CHECK(var / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(ri / std::sqrt(rr * ii)) < 0.01);
  CHECK_THROWS(awgn(z, -1.0, rng));
}

TEST_CASE("delay-domain transform") {
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Constant(8, 2, cd(1, 0));
  auto d = dft_delay_transform(c);
  CHECK(std::abs(d(0, 0) - std::sqrt(8.0)) < 1e-12);
  CHECK(d.bottomRows(7).norm() < 1e-12);

  Rng rng(2);
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(16, 3);
  awgn(y, 1.0, rng);
  auto t = dft_delay_transform(y);
  CHECK(std::abs(t.norm() - y.norm()) < 1e-10);
  CHECK((idft_delay_transform(t) - y).norm() < 1e-10);
  CHECK_THROWS(dft_delay_transform(Eigen::MatrixXcd(0, 3)));

  // on-grid single path: the conjugate-transposed channel concentrates in bin p
  const int Nc = 8, p = 3;
  PathSet path{{cd(0.6, -0.8), 0.4, 0.1, p * 1e-8}};
  auto H = evaluate_paths(path, 2, 2, Nc, 1e-8);
  Eigen::MatrixXcd Hd = dft_delay_transform(H.adjoint());
  CHECK(Hd.row(p).squaredNorm() / Hd.squaredNorm() > 1 - 1e-12);
}

TEST_CASE("seeded generation is reproducible") {
  SystemConfig cfg;
  cfg.Lp = {1, 8};
  Rng a(77), b(77);
  for (int t = 0; t < 5; ++t) {
    auto x = gen_channel(cfg, a), y = gen_channel(cfg, b);
    for (int k = 0; k < cfg.K; ++k) CHECK((x.users[k].H - y.users[k].H).norm() == 0.0);
  }
}

TEST_CASE("config validation and snapshot") {
  SystemConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.K = 17;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("K"), ConfigError);
  cfg.K = 2;
  cfg.Pt = 0;
  try {
    cfg.validate();
    FAIL("expected");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "Pt");
  }
  SystemConfig c2;
  c2.Lp = {1, 8};
  c2.channel_kind = ChannelKind::one_ring;
  c2.snr_db = -3.25;
  c2.seed = 12345678901234ULL;
  CHECK(SystemConfig::from_snapshot(c2.snapshot()) == c2);
}

TEST_CASE("dataset cache round trip") {
  SystemConfig cfg;
  cfg.Lp = {1, 3};
  Rng rng(4);
  std::vector<ChannelRealization> s;
  for (int i = 0; i < 5; ++i) s.push_back(gen_channel(cfg, rng));
  const auto path = std::filesystem::temp_directory_path() / "airbeam_test_ds.bin";
  write_dataset(path, cfg, s);
  SystemConfig back;
  auto r = read_dataset(path, &back);
  CHECK(back == cfg);
  REQUIRE(r.size() == 5u);
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < cfg.K; ++k) {
      CHECK((r[i].users[k].H - s[i].users[k].H).norm() == 0.0);
      REQUIRE(r[i].users[k].paths.size() == s[i].users[k].paths.size());
      CHECK(r[i].users[k].paths[0].tau == s[i].users[k].paths[0].tau);
    }
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_WITH(read_dataset(path), doctest::Contains("truncated"));
}
