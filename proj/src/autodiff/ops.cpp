#include "airbeam/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace airbeam::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

struct Broadcast {
  Shape out;
  std::vector<std::int64_t> stride_a;
  std::vector<std::int64_t> stride_b;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  const int ra = static_cast<int>(a.size());
  const int rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Broadcast p;
  p.out.resize(r);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (int i = 0; i < r; ++i) {
    const int ia = i - (r - ra);
    const int ib = i - (r - rb);
    const std::int64_t da = ia >= 0 ? a[ia] : 1;
    const std::int64_t db = ib >= 0 ? b[ib] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(da, db);
    if (da == 0 || db == 0) p.out[i] = 0;
    if (ia >= 0 && da != 1) p.stride_a[i] = sa[ia];
    if (ib >= 0 && db != 1) p.stride_b[i] = sb[ib];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const int r = static_cast<int>(p.out.size());
  const std::int64_t total = numel_of(p.out);
  if (total == 0) return;
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const std::int64_t inner = p.out[r - 1];
  const std::int64_t sa = p.stride_a[r - 1];
  const std::int64_t sb = p.stride_b[r - 1];
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t ia = 0;
  std::int64_t ib = 0;
  for (std::int64_t o = 0; o < total; o += inner) {
    for (std::int64_t j = 0; j < inner; ++j) f(o + j, ia + j * sa, ib + j * sb);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class Da, class Db>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const auto& av = a.values();
  const auto& bv = b.values();
  if (a.shape() == b.shape()) {
    const std::size_t n = av.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return make_result(a.shape(), std::move(out), {a, b}, [da, db](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const auto& g = self.grad;
      const std::size_t n = g.size();
      if (pa.requires_grad) {
        auto& ga = pa.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * da(pa.value[i], pb.value[i], self.value[i]);
      }
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * db(pa.value[i], pb.value[i], self.value[i]);
      }
    });
  }
  Broadcast plan = plan_broadcast(a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(numel_of(plan.out)));
  for_each_broadcast(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
    out[o] = fwd(av[i], bv[j]);
  });
  Shape out_shape = plan.out;
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [plan = std::move(plan), da, db](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       const auto& g = self.grad;
                       if (pa.requires_grad) {
                         auto& ga = pa.grad_buffer();
                         for_each_broadcast(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
                           ga[i] += g[o] * da(pa.value[i], pb.value[j], self.value[o]);
                         });
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.grad_buffer();
                         for_each_broadcast(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
                           gb[j] += g[o] * db(pa.value[i], pb.value[j], self.value[o]);
                         });
                       }
                     });
}

// d(out)/d(x) is given as a function of (x, y).
template <class Fwd, class Dx>
Tensor unary_op(const Tensor& a, Fwd fwd, Dx dx) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), {a}, [dx](Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * dx(p.value[i], self.value[i]);
  });
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t n = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Column sums of a row-major matrix, accumulated row by row. Eigen's
// vectorized reductions pick their summation order from the buffer's
// alignment, which would make gradients depend on the allocator.
void add_column_sums(const double* g, std::int64_t rows, std::int64_t cols, double* out) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = g + r * cols;
    for (std::int64_t c = 0; c < cols; ++c) out[c] += row[c];
  }
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor sin(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary_op(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

namespace {
// tanh(softplus(x)) = n / (n + 2) with n = e^x (e^x + 2), so one exp gives
// both the value and the slope.
struct MishParts {
  double value;
  double slope;
};

MishParts mish_parts(double x) {
  if (x > 20.0) return {x, 1.0};
  const double e = std::exp(x);
  const double n = e * (e + 2.0);
  const double t = n / (n + 2.0);
  const double sig = e / (1.0 + e);
  return {x * t, t + x * (1.0 - t * t) * sig};
}
}  // namespace

double mish_value(double x) { return mish_parts(x).value; }

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor mish(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  auto slope = std::make_shared<std::vector<double>>(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const auto p = mish_parts(av[i]);
    out[i] = p.value;
    (*slope)[i] = p.slope;
  }
  return make_result(a.shape(), std::move(out), {a}, [slope](Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * (*slope)[i];
  });
}

Tensor sum(const Tensor& a) {
  const auto& v = a.values();
  double s = 0.0;
  for (double x : v) s += x;
  return make_result({}, {s}, {a}, [](Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    const double g = self.grad[0];
    for (auto& x : gp) x += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw InvalidInput("mean of empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
  axis = normalize_axis(axis, a.rank());
  const AxisSplit sp = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  const auto& v = a.values();
  std::vector<double> out(static_cast<std::size_t>(sp.outer * sp.inner), 0.0);
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    const double* src = v.data() + o * sp.n * sp.inner;
    double* dst = out.data() + o * sp.inner;
    for (std::int64_t k = 0; k < sp.n; ++k) {
      for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += src[k * sp.inner + i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [sp](Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    const auto& g = self.grad;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t k = 0; k < sp.n; ++k) {
        for (std::int64_t i = 0; i < sp.inner; ++i) gp[(o * sp.n + k) * sp.inner + i] += g[o * sp.inner + i];
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> v(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(v), {a}, [](Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor transpose_last2(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose_last2 needs rank >= 2, got " + shape_str(a.shape()));
  const std::int64_t m = a.dim(-2);
  const std::int64_t n = a.dim(-1);
  const std::int64_t batch = a.numel() / std::max<std::int64_t>(m * n, 1);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  const auto& v = a.values();
  std::vector<double> out(v.size());
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* src = v.data() + b * m * n;
    double* dst = out.data() + b * m * n;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [m, n, batch](Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    const auto& g = self.grad;
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) gp[b * m * n + i * n + j] += g[b * m * n + j * m + i];
    }
  });
}

Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, a.rank());
  const AxisSplit sp = split_at(a.shape(), axis);
  if (start < 0 || length < 0 || start + length > sp.n) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const auto& v = a.values();
  std::vector<double> out(static_cast<std::size_t>(sp.outer * length * sp.inner));
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    std::copy_n(v.data() + (o * sp.n + start) * sp.inner, length * sp.inner, out.data() + o * length * sp.inner);
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [sp, start, length](Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    const auto& g = self.grad;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      double* dst = gp.data() + (o * sp.n + start) * sp.inner;
      const double* src = g.data() + o * length * sp.inner;
      for (std::int64_t i = 0; i < length * sp.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw InvalidInput("concat of zero tensors");
  const int rank = parts[0].rank();
  axis = normalize_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  std::vector<std::int64_t> lengths;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (static_cast<int>(s.size()) != rank) {
      throw DimensionError("concat rank mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(s));
    }
    for (int i = 0; i < rank; ++i) {
      if (i != axis && s[i] != parts[0].shape()[i]) {
        throw DimensionError("concat shape mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(s));
      }
    }
    lengths.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisSplit sp = split_at(out_shape, axis);
  std::vector<double> out(static_cast<std::size_t>(numel_of(out_shape)));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].values();
    const std::int64_t len = lengths[k];
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      std::copy_n(v.data() + o * len * sp.inner, len * sp.inner, out.data() + (o * sp.n + offset) * sp.inner);
    }
    offset += len;
  }
  return make_result(std::move(out_shape), std::move(out), parts, [sp, lengths](Node& self) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      const std::int64_t len = lengths[k];
      if (p.requires_grad) {
        auto& gp = p.grad_buffer();
        for (std::int64_t o = 0; o < sp.outer; ++o) {
          const double* src = self.grad.data() + (o * sp.n + offset) * sp.inner;
          double* dst = gp.data() + o * len * sp.inner;
          for (std::int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
        }
      }
      offset += len;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(-2);
  const std::int64_t k = a.dim(-1);
  const std::int64_t n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }

  // Right operand without batch axes: one GEMM over all stacked rows of a.
  if (b.rank() == 2) {
    const std::int64_t rows = a.numel() / std::max<std::int64_t>(k, 1);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<double> out(static_cast<std::size_t>(rows * n));
    MapM(out.data(), rows, n).noalias() = CMapM(a.values().data(), rows, k) * CMapM(b.values().data(), k, n);
    return make_result(std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      CMapM g(self.grad.data(), rows, n);
      if (pa.requires_grad) {
        MapM(pa.grad_buffer().data(), rows, k).noalias() += g * CMapM(pb.value.data(), k, n).transpose();
      }
      if (pb.requires_grad) {
        MapM(pb.grad_buffer().data(), k, n).noalias() += CMapM(pa.value.data(), rows, k).transpose() * g;
      }
    });
  }

  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Broadcast plan = plan_broadcast(batch_a, batch_b);
  Shape out_shape = plan.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::int64_t batch = numel_of(plan.out);
  std::vector<std::int64_t> ia(static_cast<std::size_t>(batch));
  std::vector<std::int64_t> ib(static_cast<std::size_t>(batch));
  for_each_broadcast(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
    ia[o] = i;
    ib[o] = j;
  });
  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::int64_t t = 0; t < batch; ++t) {
    MapM(out.data() + t * m * n, m, n).noalias() =
        CMapM(av + ia[t] * m * k, m, k) * CMapM(bv + ib[t] * k * n, k, n);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [ia = std::move(ia), ib = std::move(ib), m, k, n](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       const std::size_t batch = ia.size();
                       if (pa.requires_grad) {
                         auto& ga = pa.grad_buffer();
                         for (std::size_t t = 0; t < batch; ++t) {
                           MapM(ga.data() + ia[t] * m * k, m, k).noalias() +=
                               CMapM(self.grad.data() + t * m * n, m, n) *
                               CMapM(pb.value.data() + ib[t] * k * n, k, n).transpose();
                         }
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.grad_buffer();
                         for (std::size_t t = 0; t < batch; ++t) {
                           MapM(gb.data() + ib[t] * k * n, k, n).noalias() +=
                               CMapM(pa.value.data() + ia[t] * m * k, m, k).transpose() *
                               CMapM(self.grad.data() + t * m * n, m, n);
                         }
                       }
                     });
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || x.dim(1) != weight.dim(0) ||
      bias.dim(0) != weight.dim(1)) {
    throw DimensionError("dense: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  const std::int64_t rows = x.dim(0);
  const std::int64_t in = x.dim(1);
  const std::int64_t out_dim = weight.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim));
  MapM y(out.data(), rows, out_dim);
  y.noalias() = CMapM(x.values().data(), rows, in) * CMapM(weight.values().data(), in, out_dim);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), out_dim);
  return make_result({rows, out_dim}, std::move(out), {x, weight, bias}, [rows, in, out_dim](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    CMapM g(self.grad.data(), rows, out_dim);
    if (px.requires_grad) {
      MapM(px.grad_buffer().data(), rows, in).noalias() += g * CMapM(pw.value.data(), in, out_dim).transpose();
    }
    if (pw.requires_grad) {
      MapM(pw.grad_buffer().data(), in, out_dim).noalias() += CMapM(px.value.data(), rows, in).transpose() * g;
    }
    if (pb.requires_grad) {
      add_column_sums(self.grad.data(), rows, out_dim, pb.grad_buffer().data());
    }
  });
}

Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || weight.rank() != 3 || bias.rank() != 1) {
    throw DimensionError("conv1d: expected x [batch,c_in,length], weight [c_out,c_in,width], bias [c_out]; got " +
                         shape_str(x.shape()) + ", " + shape_str(weight.shape()) + ", " + shape_str(bias.shape()));
  }
  const std::int64_t batch = x.dim(0);
  const std::int64_t cin = x.dim(1);
  const std::int64_t len = x.dim(2);
  const std::int64_t cout = weight.dim(0);
  const std::int64_t width = weight.dim(2);
  if (len < 1) throw InvalidInput("conv1d: length must be >= 1, got " + std::to_string(len));
  if (weight.dim(1) != cin || bias.dim(0) != cout || width % 2 == 0) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  const std::int64_t pad = width / 2;
  const std::int64_t patch = cin * width;
  const std::int64_t rows = batch * len;

  // im2col: row (b, t) holds x[b, c, t + w - pad] at column c*width + w.
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * patch), 0.0);
  const double* xv = x.values().data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < cin; ++c) {
      const double* src = xv + (b * cin + c) * len;
      for (std::int64_t t = 0; t < len; ++t) {
        double* row = cols->data() + (b * len + t) * patch + c * width;
        for (std::int64_t w = 0; w < width; ++w) {
          const std::int64_t s = t + w - pad;
          if (s >= 0 && s < len) row[w] = src[s];
        }
      }
    }
  }
  RowMat y = CMapM(cols->data(), rows, patch) * CMapM(weight.values().data(), cout, patch).transpose();
  std::vector<double> out(static_cast<std::size_t>(batch * cout * len));
  const double* bv = bias.values().data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t t = 0; t < len; ++t)
      for (std::int64_t o = 0; o < cout; ++o) out[(b * cout + o) * len + t] = y(b * len + t, o) + bv[o];

  return make_result({batch, cout, len}, std::move(out), {x, weight, bias},
                     [cols, batch, cin, len, cout, width, pad, patch, rows](Node& self) {
                       auto& px = *self.parents[0];
                       auto& pw = *self.parents[1];
                       auto& pb = *self.parents[2];
                       RowMat g(rows, cout);
                       for (std::int64_t b = 0; b < batch; ++b)
                         for (std::int64_t o = 0; o < cout; ++o)
                           for (std::int64_t t = 0; t < len; ++t) g(b * len + t, o) = self.grad[(b * cout + o) * len + t];
                       if (pb.requires_grad) {
                         add_column_sums(g.data(), rows, cout, pb.grad_buffer().data());
                       }
                       if (pw.requires_grad) {
                         MapM(pw.grad_buffer().data(), cout, patch).noalias() +=
                             g.transpose() * CMapM(cols->data(), rows, patch);
                       }
                       if (px.requires_grad) {
                         RowMat dcols = g * CMapM(pw.value.data(), cout, patch);
                         auto& gx = px.grad_buffer();
                         for (std::int64_t b = 0; b < batch; ++b) {
                           for (std::int64_t c = 0; c < cin; ++c) {
                             double* dst = gx.data() + (b * cin + c) * len;
                             for (std::int64_t t = 0; t < len; ++t) {
                               const double* row = dcols.data() + (b * len + t) * patch + c * width;
                               for (std::int64_t w = 0; w < width; ++w) {
                                 const std::int64_t s = t + w - pad;
                                 if (s >= 0 && s < len) dst[s] += row[w];
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats,
                  bool training) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("batch_norm: expected [batch,features] or [batch,channels,length], got " +
                         shape_str(x.shape()));
  }
  const std::int64_t batch = x.dim(0);
  const std::int64_t ch = x.dim(1);
  const std::int64_t len = x.rank() == 3 ? x.dim(2) : 1;
  if (gamma.numel() != ch || beta.numel() != ch || !stats.running_mean || !stats.running_var ||
      static_cast<std::int64_t>(stats.running_mean->size()) != ch ||
      static_cast<std::int64_t>(stats.running_var->size()) != ch) {
    throw DimensionError("batch_norm: parameters do not match " + std::to_string(ch) + " features of " +
                         shape_str(x.shape()));
  }
  if (training && batch < 2) {
    throw InvalidInput("batch_norm: training mode needs batch size >= 2, got " + std::to_string(batch));
  }
  const double count = static_cast<double>(batch * len);
  const double* xv = x.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();

  std::vector<double> mu(ch, 0.0);
  std::vector<double> inv_std(ch, 0.0);
  if (training) {
    std::vector<double> var(ch, 0.0);
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t c = 0; c < ch; ++c)
        for (std::int64_t t = 0; t < len; ++t) mu[c] += xv[(b * ch + c) * len + t];
    for (auto& m : mu) m /= count;
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t c = 0; c < ch; ++c)
        for (std::int64_t t = 0; t < len; ++t) {
          const double d = xv[(b * ch + c) * len + t] - mu[c];
          var[c] += d * d;
        }
    auto& rm = *stats.running_mean;
    auto& rv = *stats.running_var;
    for (std::int64_t c = 0; c < ch; ++c) {
      const double biased = var[c] / count;
      inv_std[c] = 1.0 / std::sqrt(biased + stats.eps);
      rm[c] = (1.0 - stats.momentum) * rm[c] + stats.momentum * mu[c];
      rv[c] = (1.0 - stats.momentum) * rv[c] + stats.momentum * var[c] / (count - 1.0);
    }
  } else {
    for (std::int64_t c = 0; c < ch; ++c) {
      mu[c] = (*stats.running_mean)[c];
      inv_std[c] = 1.0 / std::sqrt((*stats.running_var)[c] + stats.eps);
    }
  }

  const std::size_t total = static_cast<std::size_t>(batch * ch * len);
  auto xhat = std::make_shared<std::vector<double>>(total);
  std::vector<double> out(total);
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t c = 0; c < ch; ++c)
      for (std::int64_t t = 0; t < len; ++t) {
        const std::size_t i = static_cast<std::size_t>((b * ch + c) * len + t);
        (*xhat)[i] = (xv[i] - mu[c]) * inv_std[c];
        out[i] = gv[c] * (*xhat)[i] + bv[c];
      }

  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [xhat, inv_std = std::move(inv_std), batch, ch, len, count, training](Node& self) {
                       auto& px = *self.parents[0];
                       auto& pg = *self.parents[1];
                       auto& pbeta = *self.parents[2];
                       const auto& g = self.grad;
                       std::vector<double> sum_g(ch, 0.0);
                       std::vector<double> sum_gx(ch, 0.0);
                       for (std::int64_t b = 0; b < batch; ++b)
                         for (std::int64_t c = 0; c < ch; ++c)
                           for (std::int64_t t = 0; t < len; ++t) {
                             const std::size_t i = static_cast<std::size_t>((b * ch + c) * len + t);
                             sum_g[c] += g[i];
                             sum_gx[c] += g[i] * (*xhat)[i];
                           }
                       if (pg.requires_grad) {
                         auto& gg = pg.grad_buffer();
                         for (std::int64_t c = 0; c < ch; ++c) gg[c] += sum_gx[c];
                       }
                       if (pbeta.requires_grad) {
                         auto& gb = pbeta.grad_buffer();
                         for (std::int64_t c = 0; c < ch; ++c) gb[c] += sum_g[c];
                       }
                       if (!px.requires_grad) return;
                       auto& gx = px.grad_buffer();
                       const double* gamma = pg.value.data();
                       for (std::int64_t b = 0; b < batch; ++b)
                         for (std::int64_t c = 0; c < ch; ++c) {
                           const double scale = gamma[c] * inv_std[c];
                           for (std::int64_t t = 0; t < len; ++t) {
                             const std::size_t i = static_cast<std::size_t>((b * ch + c) * len + t);
                             if (training) {
                               gx[i] += scale * (g[i] - sum_g[c] / count - (*xhat)[i] * sum_gx[c] / count);
                             } else {
                               gx[i] += scale * g[i];
                             }
                           }
                         }
                     });
}

Tensor straight_through(const Tensor& x, const std::function<double(double)>& quantizer) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = quantizer(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor clamp_ratio(const Tensor& norm, double cap) {
  return unary_op(
      norm, [cap](double n) { return n > cap ? cap / n : 1.0; },
      [cap](double n, double) { return n > cap ? -cap / (n * n) : 0.0; });
}

}  // namespace airbeam::ad

namespace airbeam::ad {

Tensor clamp_ratio_sq(const Tensor& sq_norm, double cap) {
  const double cap2 = cap * cap;
  return unary_op(
      sq_norm, [cap, cap2](double s) { return s > cap2 ? cap / std::sqrt(s) : 1.0; },
      [cap, cap2](double s, double) { return s > cap2 ? -0.5 * cap / (s * std::sqrt(s)) : 0.0; });
}

}  // namespace airbeam::ad
