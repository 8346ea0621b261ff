#pragma once

#include "airbeam/autodiff/ops.hpp"

namespace airbeam::ad {

/// Complex tensor held as two real planes of identical shape.
struct ComplexPair {
  Tensor re;
  Tensor im;

  const Shape& shape() const { return re.shape(); }
};

ComplexPair make_complex(Tensor re, Tensor im);

ComplexPair cadd(const ComplexPair& a, const ComplexPair& b);
ComplexPair csub(const ComplexPair& a, const ComplexPair& b);
/// Elementwise (broadcasting) product.
ComplexPair cmul(const ComplexPair& a, const ComplexPair& b);
/// Scales both planes by a real tensor (broadcasting).
ComplexPair cscale(const ComplexPair& a, const Tensor& s);
ComplexPair cscale(const ComplexPair& a, double s);
ComplexPair conj(const ComplexPair& a);

/// Complex matrix product from four real products.
ComplexPair cmatmul(const ComplexPair& a, const ComplexPair& b);
/// Conjugate transpose of the trailing two axes.
ComplexPair ctranspose(const ComplexPair& a);

/// |z|^2 elementwise.
Tensor abs2(const ComplexPair& a);
/// magnitude * exp(j * phase).
ComplexPair polar(double magnitude, const Tensor& phase);

ComplexPair creshape(const ComplexPair& a, Shape shape);
ComplexPair cslice(const ComplexPair& a, int axis, std::int64_t start, std::int64_t length);

}  // namespace airbeam::ad
