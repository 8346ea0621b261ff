#include "airbeam/airlink/diff.hpp"

#include <cmath>
#include <numbers>

namespace airbeam::link {

using ad::Shape;

ChannelBatch make_channel_batch(const std::vector<const chan::ChannelRealization*>& samples) {
  ChannelBatch cb;
  if (samples.empty()) throw ad::InvalidInput("empty channel batch");
  cb.B = static_cast<int>(samples.size());
  cb.K = static_cast<int>(samples[0]->users.size());
  cb.M = static_cast<int>(samples[0]->users[0].H.rows());
  cb.Nc = static_cast<int>(samples[0]->users[0].H.cols());
  const std::size_t n = static_cast<std::size_t>(cb.B) * cb.K * cb.Nc * cb.M;
  std::vector<double> re(n), im(n), cre(n), cim(n);
  for (int b = 0; b < cb.B; ++b) {
    if (static_cast<int>(samples[b]->users.size()) != cb.K) throw ad::DimensionError("batch mixes user counts");
    for (int k = 0; k < cb.K; ++k) {
      const auto& H = samples[b]->users[k].H;
      if (H.rows() != cb.M || H.cols() != cb.Nc) throw ad::DimensionError("batch mixes channel shapes");
      for (int c = 0; c < cb.Nc; ++c) {
        for (int m = 0; m < cb.M; ++m) {
          const std::size_t i = ((static_cast<std::size_t>(b) * cb.K + k) * cb.Nc + c) * cb.M + m;
          const std::size_t j = ((static_cast<std::size_t>(b) * cb.Nc + c) * cb.K + k) * cb.M + m;
          re[i] = H(m, c).real();
          im[i] = H(m, c).imag();
          cre[j] = H(m, c).real();
          cim[j] = -H(m, c).imag();
        }
      }
    }
  }
  cb.H = {Tensor::constant({cb.B, cb.K, cb.Nc, cb.M}, std::move(re)),
          Tensor::constant({cb.B, cb.K, cb.Nc, cb.M}, std::move(im))};
  cb.H_conj = {Tensor::constant({cb.B, cb.Nc, cb.K, cb.M}, std::move(cre)),
               Tensor::constant({cb.B, cb.Nc, cb.K, cb.M}, std::move(cim))};
  return cb;
}

ComplexPair complex_noise(const Shape& shape, double sigma2, Rng& rng) {
  const auto n = static_cast<std::size_t>(ad::numel_of(shape));
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    const cd z = complex_normal(rng, sigma2);
    re[i] = z.real();
    im[i] = z.imag();
  }
  return {Tensor::constant(shape, std::move(re)), Tensor::constant(shape, std::move(im))};
}

ComplexPair combiner(const Tensor& phi) {
  return ad::polar(1.0 / std::sqrt(static_cast<double>(phi.dim(-1))), phi);
}

ComplexPair pilot_matrix(const Tensor& phi, double Pt, int Nc) {
  return ad::polar(std::sqrt(Pt / (static_cast<double>(phi.dim(-1)) * Nc)), phi);
}

namespace {
// Y^T = H^T A^T per user: [B, K, Nc, M] x [M, rows] -> [B, K, rows, Nc].
ComplexPair apply_pilots(const ComplexPair& H, const ComplexPair& A, int B, int K, int Nc, int M) {
  const auto rows = A.shape()[0];
  if (A.shape()[1] != M) {
    throw ad::DimensionError("pilot matrix " + ad::shape_str(A.shape()) + " does not match " + std::to_string(M) +
                             " antennas");
  }
  const ComplexPair At{ad::transpose_last2(A.re), ad::transpose_last2(A.im)};
  auto y = ad::cmatmul(ad::creshape(H, {static_cast<std::int64_t>(B) * K * Nc, M}), At);
  y = ad::creshape(y, {static_cast<std::int64_t>(B) * K, Nc, rows});
  y = {ad::transpose_last2(y.re), ad::transpose_last2(y.im)};
  return ad::creshape(y, {B, K, rows, Nc});
}
}  // namespace

ComplexPair tdd_pilots(const Tensor& phi, const ChannelBatch& ch, const ComplexPair* antenna_noise) {
  ComplexPair H = antenna_noise ? ad::cadd(ch.H, *antenna_noise) : ch.H;
  return apply_pilots(H, combiner(phi), ch.B, ch.K, ch.Nc, ch.M);
}

ComplexPair fdd_pilots(const Tensor& phi, const ChannelBatch& ch, double Pt, const ComplexPair* noise) {
  auto y = apply_pilots(ch.H, pilot_matrix(phi, Pt, ch.Nc), ch.B, ch.K, ch.Nc, ch.M);
  return noise ? ad::cadd(y, *noise) : y;
}

ComplexPair delay_transform(const ComplexPair& y) {
  const auto shape = y.shape();
  const auto nc = shape.back();
  const Eigen::MatrixXcd F = chan::dft_matrix(static_cast<int>(nc));
  std::vector<double> re(static_cast<std::size_t>(nc * nc)), im(re.size());
  for (std::int64_t p = 0; p < nc; ++p) {
    for (std::int64_t q = 0; q < nc; ++q) {
      re[p * nc + q] = F(p, q).real();
      im[p * nc + q] = F(p, q).imag();
    }
  }
  // F is symmetric, so applying it along the last axis is Y F.
  const ComplexPair Fc{Tensor::constant({nc, nc}, std::move(re)), Tensor::constant({nc, nc}, std::move(im))};
  const auto rows = ad::numel_of(shape) / nc;
  return ad::creshape(ad::cmatmul(ad::creshape(y, {rows, nc}), Fc), shape);
}

DiffBeamformer assemble_beamformer(const Tensor& theta, const Tensor& fbar, double Pt) {
  if (theta.rank() != 3 || fbar.rank() != 3) throw ad::DimensionError("assemble_beamformer expects rank-3 inputs");
  const auto B = theta.dim(0), M = theta.dim(1), K = theta.dim(2);
  const auto Nc = fbar.dim(2);
  if (fbar.dim(0) != B || fbar.dim(1) != 2 * K * K) {
    throw ad::DimensionError("digital output " + ad::shape_str(fbar.shape()) + " does not match analog " +
                             ad::shape_str(theta.shape()));
  }
  DiffBeamformer bf;
  bf.F_RF = ad::polar(1.0, theta);
  auto plane = [&](std::int64_t start) {
    auto t = ad::transpose_last2(ad::slice(fbar, 1, start, K * K));  // [B, Nc, K*K]
    return ad::reshape(t, {B, Nc, K, K});
  };
  const ComplexPair Fbar{plane(0), plane(K * K)};
  // transposed products: (F_RF F[n])^T = F[n]^T F_RF^T
  const ComplexPair FbarT =
      ad::creshape({ad::transpose_last2(Fbar.re), ad::transpose_last2(Fbar.im)}, {B, Nc * K, K});
  const ComplexPair FrfT{ad::transpose_last2(bf.F_RF.re), ad::transpose_last2(bf.F_RF.im)};
  const ComplexPair raw = ad::creshape(ad::cmatmul(FbarT, FrfT), {B, Nc, K, M});
  const Tensor sq = ad::sum_axis(ad::reshape(ad::abs2(raw), {B, Nc, K * M}), 2);
  const Tensor ratio = ad::reshape(ad::clamp_ratio_sq(sq, std::sqrt(Pt / Nc)), {B, Nc, 1, 1});
  bf.F_BB = ad::cscale(Fbar, ratio);
  bf.beams = ad::cscale(raw, ratio);
  return bf;
}

Tensor sum_rate(const DiffBeamformer& bf, const ChannelBatch& ch, double sigma2) {
  if (!(sigma2 > 0)) throw ad::InvalidInput("sum_rate: noise power must be positive");
  const std::int64_t B = ch.B, K = ch.K, M = ch.M, Nc = ch.Nc;
  if (bf.beams.shape() != Shape{B, Nc, K, M}) {
    throw ad::DimensionError("beamformer " + ad::shape_str(bf.beams.shape()) + " does not match channel batch");
  }
  const ComplexPair beams{ad::transpose_last2(ad::reshape(bf.beams.re, {B * Nc, K, M})),
                          ad::transpose_last2(ad::reshape(bf.beams.im, {B * Nc, K, M}))};
  // gains(k, j) = h[k, n]^H f_j[n]
  const ComplexPair gains = ad::cmatmul(ad::creshape(ch.H_conj, {B * Nc, K, M}), beams);
  const Tensor power = ad::reshape(ad::abs2(gains), {B, Nc, K, K});
  std::vector<double> eye(static_cast<std::size_t>(K * K), 0.0), off(static_cast<std::size_t>(K * K), 1.0);
  for (std::int64_t k = 0; k < K; ++k) {
    eye[k * K + k] = 1.0;
    off[k * K + k] = 0.0;
  }
  const Tensor sig = ad::sum_axis(power * Tensor::constant({K, K}, eye), -1);
  const Tensor interf = ad::sum_axis(power * Tensor::constant({K, K}, off), -1);
  const Tensor sinr = sig / ad::add_scalar(interf, sigma2);
  const Tensor per = ad::log(ad::add_scalar(sinr, 1.0));  // [B, Nc, K]
  return ad::mul_scalar(ad::sum_axis(ad::sum_axis(per, 2), 1), 1.0 / (std::numbers::ln2 * Nc));
}

HybridBeamformer extract_beamformer(const DiffBeamformer& bf, const Tensor& theta, int b) {
  const auto M = theta.dim(1), K = theta.dim(2);
  const auto Nc = bf.F_BB.shape()[1];
  HybridBeamformer out;
  out.theta.resize(M, K);
  out.F_RF.resize(M, K);
  for (std::int64_t i = 0; i < M; ++i) {
    for (std::int64_t j = 0; j < K; ++j) {
      const auto idx = (b * M + i) * K + j;
      out.theta(i, j) = theta.at(idx);
      out.F_RF(i, j) = {bf.F_RF.re.at(idx), bf.F_RF.im.at(idx)};
    }
  }
  for (std::int64_t n = 0; n < Nc; ++n) {
    Eigen::MatrixXcd f(K, K);
    for (std::int64_t i = 0; i < K; ++i)
      for (std::int64_t j = 0; j < K; ++j) {
        const auto idx = ((b * Nc + n) * K + i) * K + j;
        f(i, j) = {bf.F_BB.re.at(idx), bf.F_BB.im.at(idx)};
      }
    out.F_BB.push_back(std::move(f));
  }
  return out;
}

}  // namespace airbeam::link
