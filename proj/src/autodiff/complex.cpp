#include "airbeam/autodiff/complex.hpp"

namespace airbeam::ad {

ComplexPair make_complex(Tensor re, Tensor im) {
  if (re.shape() != im.shape()) {
    throw DimensionError("complex planes differ in shape: " + shape_str(re.shape()) + " vs " + shape_str(im.shape()));
  }
  return {std::move(re), std::move(im)};
}

ComplexPair cadd(const ComplexPair& a, const ComplexPair& b) { return {add(a.re, b.re), add(a.im, b.im)}; }

ComplexPair csub(const ComplexPair& a, const ComplexPair& b) { return {sub(a.re, b.re), sub(a.im, b.im)}; }

ComplexPair cmul(const ComplexPair& a, const ComplexPair& b) {
  return {sub(mul(a.re, b.re), mul(a.im, b.im)), add(mul(a.re, b.im), mul(a.im, b.re))};
}

ComplexPair cscale(const ComplexPair& a, const Tensor& s) { return {mul(a.re, s), mul(a.im, s)}; }

ComplexPair cscale(const ComplexPair& a, double s) { return {mul_scalar(a.re, s), mul_scalar(a.im, s)}; }

ComplexPair conj(const ComplexPair& a) { return {a.re, neg(a.im)}; }

ComplexPair cmatmul(const ComplexPair& a, const ComplexPair& b) {
  return {sub(matmul(a.re, b.re), matmul(a.im, b.im)), add(matmul(a.re, b.im), matmul(a.im, b.re))};
}

ComplexPair ctranspose(const ComplexPair& a) { return {transpose_last2(a.re), neg(transpose_last2(a.im))}; }

Tensor abs2(const ComplexPair& a) { return add(square(a.re), square(a.im)); }

ComplexPair polar(double magnitude, const Tensor& phase) {
  return {mul_scalar(cos(phase), magnitude), mul_scalar(sin(phase), magnitude)};
}

ComplexPair creshape(const ComplexPair& a, Shape shape) { return {reshape(a.re, shape), reshape(a.im, shape)}; }

ComplexPair cslice(const ComplexPair& a, int axis, std::int64_t start, std::int64_t length) {
  return {slice(a.re, axis, start, length), slice(a.im, axis, start, length)};
}

}  // namespace airbeam::ad
