#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "airbeam/autodiff/checkpoint.hpp"
#include "airbeam/autodiff/complex.hpp"
#include "airbeam/autodiff/layers.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace airbeam::ad;
using testing::gradcheck;
using testing::random_param;
using testing::weighted_sum;

namespace {
std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("airbeam_test_" + name);
}
}  // namespace

TEST_CASE("backward on trivial graphs") {
  auto x = Tensor::parameter({1}, {3.0});
  backward(sum(x));
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  x.zero_grad();
  backward(sum(square(x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  x.zero_grad();
  // repeated subexpression accumulates
  auto y = x * x + x;
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("no-grad guard drops the graph") {
  auto x = Tensor::parameter({2}, {1, 2});
  NoGradGuard g;
  auto y = square(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("elementwise ops with broadcasting match finite differences") {
  auto a = random_param({3, 1, 4}, 1);
  auto b = random_param({2, 1}, 2);
  CHECK(gradcheck({a, b}, [&] { return weighted_sum(a + b); }) < 1e-6);
  CHECK(gradcheck({a, b}, [&] { return weighted_sum(a - b); }) < 1e-6);
  CHECK(gradcheck({a, b}, [&] { return weighted_sum(a * b); }) < 1e-6);
  auto pos = Tensor::parameter({2, 1}, {1.5, 2.5});
  CHECK(gradcheck({a, pos}, [&] { return weighted_sum(a / pos); }) < 1e-6);
  CHECK((a + b).shape() == Shape{3, 2, 4});
  CHECK_THROWS_AS(add(random_param({3}, 1), random_param({4}, 2)), DimensionError);
}

TEST_CASE("unary ops match finite differences") {
  auto x = random_param({5, 3}, 3);
  auto p = Tensor::parameter({4}, {0.3, 1.1, 2.0, 0.7});
  CHECK(gradcheck({x}, [&] { return weighted_sum(sin(x)); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(cos(x)); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(exp(x)); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(square(x)); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(sigmoid(x)); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(mish(x)); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(neg(mul_scalar(add_scalar(x, 0.5), 3.0))); }) < 1e-6);
  CHECK(gradcheck({p}, [&] { return weighted_sum(log(p)); }) < 1e-6);
  CHECK(gradcheck({p}, [&] { return weighted_sum(sqrt(p)); }) < 1e-6);
}

TEST_CASE("reductions and shape ops match finite differences") {
  auto x = random_param({2, 3, 4}, 4);
  CHECK(gradcheck({x}, [&] { return mean(square(x)); }) < 1e-6);
  for (int axis = 0; axis < 3; ++axis) {
    CHECK(gradcheck({x}, [&] { return weighted_sum(sum_axis(x, axis)); }) < 1e-6);
    CHECK(gradcheck({x}, [&] { return weighted_sum(sum_axis(x, axis, true)); }) < 1e-6);
    CHECK(gradcheck({x}, [&] { return weighted_sum(slice(x, axis, 1, 1)); }) < 1e-6);
  }
  CHECK(gradcheck({x}, [&] { return weighted_sum(reshape(x, {4, 6})); }) < 1e-6);
  CHECK(gradcheck({x}, [&] { return weighted_sum(transpose_last2(x)); }) < 1e-6);
  auto y = random_param({2, 1, 4}, 5);
  CHECK(gradcheck({x, y}, [&] { return weighted_sum(concat({x, y, x}, 1)); }) < 1e-6);
  CHECK(concat({x, y}, 1).shape() == Shape{2, 4, 4});
  CHECK(sum_axis(x, -1).shape() == Shape{2, 3});
  CHECK_THROWS_AS(reshape(x, {5, 5}), DimensionError);
}

TEST_CASE("transpose and concat values") {
  auto x = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  auto t = transpose_last2(x);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(std::vector<double>(t.values().begin(), t.values().end()) == std::vector<double>{1, 4, 2, 5, 3, 6});
  auto c = concat({x, x}, 0);
  CHECK(c.at(9) == 4);
}

TEST_CASE("matmul matches finite differences, batched and broadcast") {
  auto a = random_param({2, 3, 4}, 6);
  auto b = random_param({4, 5}, 7);
  auto bb = random_param({2, 4, 5}, 8);
  auto b1 = random_param({1, 4, 2}, 9);
  CHECK(gradcheck({a, b}, [&] { return weighted_sum(matmul(a, b)); }) < 1e-6);
  CHECK(gradcheck({a, bb}, [&] { return weighted_sum(matmul(a, bb)); }) < 1e-6);
  CHECK(gradcheck({a, b1}, [&] { return weighted_sum(matmul(a, b1)); }) < 1e-6);
  auto m = random_param({3, 4}, 10);
  CHECK(gradcheck({m, bb}, [&] { return weighted_sum(matmul(m, bb)); }) < 1e-6);
  CHECK_THROWS_AS(matmul(a, random_param({3, 5}, 1)), DimensionError);

  auto p = Tensor::constant({2, 2}, {1, 2, 3, 4});
  auto q = Tensor::constant({2, 1}, {5, 6});
  auto r = matmul(p, q);
  CHECK(r.at(0) == 17);
  CHECK(r.at(1) == 39);
}

TEST_CASE("dense layer") {
  auto x = Tensor::constant({1, 2}, {1, 2});
  auto eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  auto zb = Tensor::constant({2}, {0, 0});
  auto y = dense(x, eye, zb);
  CHECK(y.at(0) == 1);
  CHECK(y.at(1) == 2);
  auto y2 = dense(Tensor::constant({1, 2}, {1, 1}), Tensor::constant({2, 1}, {2, 3}), Tensor::constant({1}, {1}));
  CHECK(y2.item() == 6);

  auto xr = random_param({4, 8}, 11);
  auto w = random_param({8, 3}, 12);
  auto b = random_param({3}, 13);
  CHECK(gradcheck({xr, w, b}, [&] { return weighted_sum(dense(xr, w, b)); }) <= 1e-4);
  try {
    dense(xr, random_param({7, 3}, 1), b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[4,8]") != std::string::npos);
    CHECK(msg.find("[7,3]") != std::string::npos);
  }
}

TEST_CASE("conv1d same padding") {
  std::vector<double> impulse(8, 0.0);
  impulse[3] = 1.0;
  auto x = Tensor::constant({1, 1, 8}, impulse);
  auto ident = Tensor::constant({1, 1, 5}, {0, 0, 1, 0, 0});
  auto b0 = Tensor::constant({1}, {0});
  auto y = conv1d_same(x, ident, b0);
  CHECK(y.shape() == Shape{1, 1, 8});
  for (int i = 0; i < 8; ++i) CHECK(y.at(i) == (i == 3 ? 1.0 : 0.0));

  auto ones = Tensor::full({1, 1, 8}, 1.0);
  auto k1 = Tensor::full({1, 1, 5}, 1.0);
  auto z = conv1d_same(ones, k1, b0);
  const std::vector<double> expected = {3, 4, 5, 5, 5, 5, 4, 3};
  for (int i = 0; i < 8; ++i) CHECK(z.at(i) == expected[i]);

  for (std::int64_t len : {1, 2, 3, 7}) {
    auto xi = random_param({2, 3, len}, 20 + len);
    auto w = random_param({4, 3, 5}, 30);
    auto b = random_param({4}, 31);
    auto out = conv1d_same(xi, w, b);
    CHECK(out.shape() == Shape{2, 4, len});
    CHECK(gradcheck({xi, w, b}, [&] { return weighted_sum(conv1d_same(xi, w, b)); }) <= 1e-4);
  }
  CHECK_THROWS_AS(conv1d_same(Tensor::zeros({1, 1, 0}), ident, b0), InvalidInput);
  CHECK_THROWS_AS(conv1d_same(Tensor::zeros({1, 2, 4}), ident, b0), DimensionError);
}

TEST_CASE("batch norm") {
  std::vector<double> rm{0.0}, rv{1.0};
  BatchNormStats st{&rm, &rv, 0.1, 1e-5};
  auto x = Tensor::constant({2, 1}, {-1, 1});
  auto g = Tensor::constant({1}, {1});
  auto b = Tensor::constant({1}, {0});
  auto y = batch_norm(x, g, b, st, true);
  CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-5));
  // running variance uses the unbiased estimate (2 here)
  CHECK(rm[0] == doctest::Approx(0.0));
  CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * 2.0));

  auto g0 = Tensor::constant({1}, {0});
  auto b3 = Tensor::constant({1}, {0.7});
  auto y0 = batch_norm(x, g0, b3, st, true);
  CHECK(y0.at(0) == doctest::Approx(0.7));
  CHECK(y0.at(1) == doctest::Approx(0.7));

  CHECK_THROWS_AS(batch_norm(Tensor::constant({1, 1}, {2}), g, b, st, true), InvalidInput);
  // eval mode with a single sample is fine
  auto ye = batch_norm(Tensor::constant({1, 1}, {2}), g, b, st, false);
  CHECK(ye.at(0) == doctest::Approx((2 - rm[0]) / std::sqrt(rv[0] + 1e-5)));

  // pre-affine statistics on a random batch, rank 2 and rank 3 layouts
  std::vector<double> m3(3, 0.0), v3(3, 1.0);
  BatchNormStats s3{&m3, &v3, 0.1, 1e-5};
  auto one = Tensor::constant({3}, {1, 1, 1});
  auto zero = Tensor::constant({3}, {0, 0, 0});
  auto xr = Tensor::constant({16, 3}, testing::random_values(48, 40, -3, 5));
  auto yr = batch_norm(xr, one, zero, s3, true);
  for (int f = 0; f < 3; ++f) {
    double mu = 0, var = 0;
    for (int i = 0; i < 16; ++i) mu += yr.at(i * 3 + f) / 16;
    for (int i = 0; i < 16; ++i) var += (yr.at(i * 3 + f) - mu) * (yr.at(i * 3 + f) - mu) / 16;
    CHECK(std::abs(mu) <= 1e-5);
    CHECK(std::abs(var - 1) <= 1e-5 * 10);  // eps shrinks the variance by var/(var+eps)
  }

  auto x3 = random_param({4, 3, 5}, 41);
  auto gamma = random_param({3}, 42);
  auto beta = random_param({3}, 43);
  CHECK(gradcheck({x3, gamma, beta}, [&] { return weighted_sum(batch_norm(x3, gamma, beta, s3, true)); }) <= 1e-4);
  auto x2 = random_param({6, 3}, 44);
  CHECK(gradcheck({x2, gamma, beta}, [&] { return weighted_sum(batch_norm(x2, gamma, beta, s3, true)); }) <= 1e-4);
  CHECK(gradcheck({x2, gamma, beta}, [&] { return weighted_sum(batch_norm(x2, gamma, beta, s3, false)); }) <= 1e-4);
}

TEST_CASE("mish values") {
  CHECK(mish_value(0.0) == 0.0);
  CHECK(mish_value(1.0) == doctest::Approx(0.865098).epsilon(1e-6));
  CHECK(mish_value(50.0) == doctest::Approx(50.0));
  CHECK(std::isfinite(mish_value(-800.0)));
  CHECK(std::isfinite(mish_value(800.0)));
  double prev = 0.0;
  for (double x = 0.0; x < 20.0; x += 0.05) {
    CHECK(mish_value(x) >= prev);
    prev = mish_value(x);
  }
  CHECK(std::abs(mish_value(30.0) - 30.0) < std::abs(mish_value(3.0) - 3.0));
}

TEST_CASE("straight-through estimator") {
  auto sign = [](double v) { return v >= 0 ? 1.0 : -1.0; };
  auto x = Tensor::parameter({1}, {0.3});
  auto y = straight_through(x, sign);
  CHECK(y.item() == 1.0);
  backward(sum(y));
  CHECK(x.grad()[0] == 1.0);

  // composite graph: leaf gradient equals that of the identity-substituted graph
  auto w = random_param({4, 3}, 50);
  auto in = Tensor::constant({2, 4}, testing::random_values(8, 51));
  auto head = Tensor::constant({3, 1}, testing::random_values(3, 52));
  auto loss_with = [&](bool quantize) {
    auto h = matmul(in, w);
    auto q = quantize ? straight_through(h, sign) : h;
    return sum(square(matmul(q, head)));
  };
  // identity graph evaluated at the quantized point gives the same chain
  w.zero_grad();
  backward(loss_with(true));
  auto g_st = w.grad();
  auto h = matmul(in, w).detach();
  std::vector<double> qv(h.values().begin(), h.values().end());
  for (auto& v : qv) v = sign(v);
  auto qc = Tensor::constant(h.shape(), qv);
  // d/dw sum((q head)^2) with dq/dh = I: grad = in^T (2 (q head) head^T)
  auto r = matmul(qc, head);
  auto up = matmul(mul_scalar(r, 2.0), transpose_last2(head));
  auto expect = matmul(transpose_last2(in), up);
  for (std::size_t i = 0; i < g_st.size(); ++i) CHECK(g_st[i] == doctest::Approx(expect.at(i)).epsilon(1e-12));
}

TEST_CASE("clamp ratio") {
  auto n = Tensor::parameter({3}, {0.0, 0.5, 4.0});
  auto r = clamp_ratio(n, 2.0);
  CHECK(r.at(0) == 1.0);
  CHECK(r.at(1) == 1.0);
  CHECK(r.at(2) == 0.5);
  auto p = Tensor::parameter({3}, {0.5, 3.0, 5.0});
  CHECK(gradcheck({p}, [&] { return weighted_sum(clamp_ratio(p, 2.0)); }) < 1e-6);
  auto s = Tensor::parameter({3}, {0.0, 1.0, 16.0});
  auto rs = clamp_ratio_sq(s, 2.0);
  CHECK(rs.at(0) == 1.0);
  CHECK(rs.at(2) == 0.5);
  backward(sum(rs));
  CHECK(std::isfinite(s.grad()[0]));
  auto s2 = Tensor::parameter({3}, {0.5, 9.0, 25.0});
  CHECK(gradcheck({s2}, [&] { return weighted_sum(clamp_ratio_sq(s2, 2.0)); }) < 1e-6);
}

TEST_CASE("complex helpers") {
  auto ar = random_param({2, 3}, 60), ai = random_param({2, 3}, 61);
  auto br = random_param({3, 2}, 62), bi = random_param({3, 2}, 63);
  auto loss = [&] {
    auto c = cmatmul(make_complex(ar, ai), make_complex(br, bi));
    return weighted_sum(c.re, 1) + weighted_sum(c.im, 2);
  };
  CHECK(gradcheck({ar, ai, br, bi}, loss) < 1e-6);
  // (1+2j)(3-1j) = 5+5j
  auto z = cmatmul(make_complex(Tensor::constant({1, 1}, {1}), Tensor::constant({1, 1}, {2})),
                   make_complex(Tensor::constant({1, 1}, {3}), Tensor::constant({1, 1}, {-1})));
  CHECK(z.re.item() == 5);
  CHECK(z.im.item() == 5);
  auto h = ctranspose(make_complex(Tensor::constant({1, 2}, {1, 2}), Tensor::constant({1, 2}, {3, 4})));
  CHECK(h.shape() == Shape{2, 1});
  CHECK(h.im.at(1) == -4);
  auto ph = Tensor::constant({2}, {0, std::numbers::pi / 2});
  auto pz = polar(2.0, ph);
  CHECK(pz.re.at(0) == doctest::Approx(2));
  CHECK(pz.im.at(1) == doctest::Approx(2));
  CHECK(abs2(pz).at(1) == doctest::Approx(4));
  CHECK_THROWS_AS(make_complex(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("parameter store and layers") {
  airbeam::Rng rng(1);
  ParameterStore s;
  Dense d(s, "fc", 3, 2, rng);
  CHECK(s.parameter_count() == 8);
  for (double v : d.weight().values()) CHECK(std::abs(v) <= 1 / std::sqrt(3.0));
  CHECK_THROWS_AS(Dense(s, "fc", 3, 2, rng), InvalidInput);
  BatchNorm bn(s, "bn", 2);
  CHECK(s.buffers().size() == 2);

  ParameterStore t;
  airbeam::Rng rng2(2);
  Dense d2(t, "fc", 3, 2, rng2);
  BatchNorm bn2(t, "bn", 2);
  t.copy_from(s);
  for (std::size_t i = 0; i < s.parameters().size(); ++i) {
    auto a = s.parameters()[i].tensor.values();
    auto b = t.parameters()[i].tensor.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  ParameterStore u;
  Dense d3(u, "fc", 4, 2, rng2);
  BatchNorm bn3(u, "bn", 2);
  const auto before = std::vector<double>(d3.weight().values().begin(), d3.weight().values().end());
  CHECK_THROWS_WITH_AS(u.copy_from(s), doctest::Contains("fc.weight"), DimensionError);
  CHECK(std::equal(before.begin(), before.end(), d3.weight().values().begin()));
}

TEST_CASE("checkpoint round trip and failure modes") {
  airbeam::Rng rng(5);
  ParameterStore s;
  Dense d(s, "fc", 3, 2, rng);
  BatchNorm bn(s, "bn", 2);
  bn.running_mean() = {0.25, -0.5};
  const auto path = temp_file("ck.bin");
  save_checkpoint(path, s, "M=16\nNc=8\n");

  ParameterStore t;
  airbeam::Rng rng2(6);
  Dense d2(t, "fc", 3, 2, rng2);
  BatchNorm bn2(t, "bn", 2);
  CHECK(load_checkpoint(path, t) == "M=16\nNc=8\n");
  for (std::size_t i = 0; i < s.parameters().size(); ++i) {
    auto a = s.parameters()[i].tensor.values();
    auto b = t.parameters()[i].tensor.values();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
  CHECK(bn2.running_mean() == std::vector<double>{0.25, -0.5});

  // byte layout: magic then a little-endian version
  {
    std::ifstream is(path, std::ios::binary);
    unsigned char head[8];
    is.read(reinterpret_cast<char*>(head), 8);
    CHECK(std::string(reinterpret_cast<char*>(head), 4) == "ABCK");
    CHECK(head[4] == 1);
    CHECK(head[5] == 0);
  }

  // truncated file leaves the target untouched
  const auto size = std::filesystem::file_size(path);
  const auto trunc = temp_file("ck_trunc.bin");
  std::filesystem::copy_file(path, trunc, std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(trunc, size - 5);
  ParameterStore u;
  airbeam::Rng rng3(7);
  Dense d3(u, "fc", 3, 2, rng3);
  BatchNorm bn3(u, "bn", 2);
  const auto before = std::vector<double>(d3.weight().values().begin(), d3.weight().values().end());
  CHECK_THROWS_WITH_AS(load_checkpoint(trunc, u), doctest::Contains("truncated"), CheckpointError);
  CHECK(std::equal(before.begin(), before.end(), d3.weight().values().begin()));

  // version mismatch names both versions
  Checkpoint ck = read_checkpoint(path);
  ck.version = 7;
  const auto vpath = temp_file("ck_v7.bin");
  write_checkpoint(vpath, ck);
  try {
    read_checkpoint(vpath);
    FAIL("expected version error");
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('7') != std::string::npos);
    CHECK(msg.find('1') != std::string::npos);
  }

  // mismatched model names the first offending tensor
  ParameterStore w;
  Dense d4(w, "fc", 4, 2, rng3);
  BatchNorm bn4(w, "bn", 2);
  CHECK_THROWS_WITH_AS(load_checkpoint(path, w), doctest::Contains("fc.weight"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(temp_file("does_not_exist.bin"), w), CheckpointError);
}
