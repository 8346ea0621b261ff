#pragma once

#include <functional>
#include <vector>

#include "airbeam/autodiff/tensor.hpp"

namespace airbeam::ad {

// Elementwise binary ops broadcast with numpy rules (shapes aligned on the
// right, size-1 or missing axes stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// x * tanh(softplus(x)).
Tensor mish(const Tensor& a);

/// Numerically stable ln(1 + e^x).
double softplus(double x);
double mish_value(double x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);

Tensor reshape(const Tensor& a, Shape shape);
/// Swaps the two trailing axes.
Tensor transpose_last2(const Tensor& a);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// [..., m, k] x [..., k, n] -> [..., m, n]; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = x W + b for x [batch, in], W [in, out], b [out].
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-correlation along the trailing axis with zero "same" padding.
/// x [batch, c_in, length], weight [c_out, c_in, width] (odd width),
/// bias [c_out].
Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct BatchNormStats {
  std::vector<double>* running_mean = nullptr;
  std::vector<double>* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-feature normalization of x [batch, features] or [batch, channels, length].
/// In training mode normalizes with batch statistics and updates the running
/// averages; otherwise uses the running averages.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  const BatchNormStats& stats, bool training);

/// Forward applies `quantizer` elementwise; backward is the identity.
Tensor straight_through(const Tensor& x, const std::function<double(double)>& quantizer);

/// min(norm, cap) / norm elementwise, and 1 where norm == 0.
Tensor clamp_ratio(const Tensor& norm, double cap);
/// Same ratio from squared norms; stays finite (gradient 0) at zero.
Tensor clamp_ratio_sq(const Tensor& sq_norm, double cap);

}  // namespace airbeam::ad
