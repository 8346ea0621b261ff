#pragma once

// Batched, differentiable versions of the air-interface operations used
// inside the training graphs. Leading axis is always the sample index.

#include <vector>

#include "airbeam/airlink/airlink.hpp"
#include "airbeam/autodiff/complex.hpp"

namespace airbeam::link {

using ad::ComplexPair;
using ad::Tensor;

struct ChannelBatch {
  int B = 0, K = 0, M = 0, Nc = 0;
  ComplexPair H;       // [B, K, Nc, M], entry h[k, n][m]
  ComplexPair H_conj;  // [B, Nc, K, M], conjugated, laid out for the rate
};

ChannelBatch make_channel_batch(const std::vector<const chan::ChannelRealization*>& samples);

/// CN(0, sigma2) constant of the given shape.
ComplexPair complex_noise(const ad::Shape& shape, double sigma2, Rng& rng);

ComplexPair combiner(const Tensor& phi);                              // W~, [QK, M]
ComplexPair pilot_matrix(const Tensor& phi, double Pt, int Nc);       // X~, [Q, M]

/// W~ (H[k] + Z') per user: [B, K, QK, Nc]. `antenna_noise` is [B, K, Nc, M] or null.
ComplexPair tdd_pilots(const Tensor& phi, const ChannelBatch& ch, const ComplexPair* antenna_noise);
/// X~ H[k] + Z per user: [B, K, Q, Nc]. `noise` is [B, K, Q, Nc] or null.
ComplexPair fdd_pilots(const Tensor& phi, const ChannelBatch& ch, double Pt, const ComplexPair* noise);

/// Unitary DFT along the trailing (subcarrier) axis.
ComplexPair delay_transform(const ComplexPair& y);

struct DiffBeamformer {
  ComplexPair F_RF;    // [B, M, K]
  ComplexPair F_BB;    // [B, Nc, K, K], power-normalized
  ComplexPair beams;   // [B, Nc, K, M]; row k is column k of F_RF F_BB[n]
};

/// theta [B, M, K]; fbar [B, 2K^2, Nc] with channel i*K + j holding
/// Re F_bar[n](i, j) and channel K^2 + i*K + j the imaginary part.
DiffBeamformer assemble_beamformer(const Tensor& theta, const Tensor& fbar, double Pt);

/// Per-sample sum rate [B].
Tensor sum_rate(const DiffBeamformer& bf, const ChannelBatch& ch, double sigma2);

/// Copies sample b out of the graph.
HybridBeamformer extract_beamformer(const DiffBeamformer& bf, const Tensor& theta, int b);

}  // namespace airbeam::link
