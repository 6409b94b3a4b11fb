#include <cmath>
#include <cstring>

#include "doctest.h"
#include "ecglab/ad/grad_check.hpp"
#include "ecglab/ad/ops.hpp"
#include "ecglab/error.hpp"
#include "ecglab/random.hpp"

using namespace ecglab;
using namespace ecglab::ad;
using Td = Tensor<double>;
using Tf = Tensor<float>;

namespace {

Td random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Td::constant(std::move(shape), std::move(v));
}

double check(const ScalarFn<double>& f, std::vector<Td> in) { return grad_check<double>(f, in, 1e-5).max_rel_error; }

// sum(w * y) with fixed random weights turns any op output into a scalar
// without the symmetry that plain sum() can hide.
Td weighted_sum(const Td& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return sum_all(mul(y, Td::constant(y.shape(), std::move(w))));
}

}  // namespace

TEST_CASE("backward of simple expressions") {
  auto x = Td::parameter({3}, {1, 2, 3});
  backward(sum_all(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto a = Td::parameter({1}, {3.0});
  auto b = Td::parameter({1}, {-2.0});
  backward(mul(a, b));
  CHECK(a.grad()[0] == -2.0);
  CHECK(b.grad()[0] == 3.0);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  auto x = Td::parameter({2}, {0.5, 1.5});
  auto loss = sum_all(mul(x, x));
  backward(loss);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(6.0));
  x.zero_grad();
  backward(loss);
  CHECK(x.grad()[1] == doctest::Approx(3.0));
}

TEST_CASE("non-scalar loss is a contract error") {
  auto x = Td::parameter({2}, {1, 2});
  CHECK_THROWS_AS(backward(x), ContractError);
  CHECK_THROWS_AS(grad_check<double>([](const std::vector<Td>& in) { return in[0]; }, {x}, 1e-5), ContractError);
}

TEST_CASE("shape errors name both shapes") {
  auto a = Td::zeros({2, 3});
  auto b = Td::zeros({4});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("(2, 3)") != std::string::npos);
    CHECK(std::string(e.what()).find("(4)") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Td::zeros({2, 3}), Td::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(log(Td::constant({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(sqrt(Td::constant({1}, {-1e-9})), DomainError);
  CHECK_NOTHROW(sqrt(Td::constant({1}, {0.0})));
}

TEST_CASE("forward values of elementary ops") {
  auto m = Td::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  auto t = transpose(m);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.data()[1] == 4.0);
  auto p = matmul(m, t);
  // [[14, 32], [32, 77]]
  CHECK(p.data()[0] == 14.0);
  CHECK(p.data()[1] == 32.0);
  CHECK(p.data()[3] == 77.0);
  auto s0 = sum_axis(m, 0);
  CHECK(s0.data()[2] == 9.0);
  auto s1 = mean_axis(m, 1);
  CHECK(s1.data()[1] == doctest::Approx(5.0));
  auto c = concat<double>({m, m}, 1);
  CHECK(c.shape() == Shape{2, 6});
  CHECK(c.data()[3] == 1.0);
  auto sl = slice(c, 1, 2, 3);
  CHECK(std::vector<double>(sl.data().begin(), sl.data().end()) == std::vector<double>{3, 1, 2, 6, 4, 5});
  // suffix broadcast: row vector added to each row
  auto r = add(m, Td::constant({3}, {10, 20, 30}));
  CHECK(r.data()[4] == 25.0);
}

TEST_CASE("tanh gradient at zero is one") {
  auto x = Td::parameter({1}, {0.0});
  backward(sum_all(tanh(x)));
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("softmax of a constant row is uniform") {
  auto y = softmax_rows(Td::full({2, 5}, 3.7));
  for (double v : y.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("det3 of identity and its cofactor gradient") {
  auto eye = Td::parameter({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(det3(eye).item() == 1.0);

  Rng rng(11);
  auto m = random_tensor({3, 3}, rng);
  auto mp = Td::parameter(m.shape(), std::vector<double>(m.data().begin(), m.data().end()));
  backward(sum_all(det3(mp)));
  // Cofactor oracle via central differences at h = 1e-3: det is multilinear,
  // so the difference quotient is exact up to rounding.
  const auto& a = m.data();
  auto det_of = [](std::vector<double> v) {
    return v[0] * (v[4] * v[8] - v[5] * v[7]) - v[1] * (v[3] * v[8] - v[5] * v[6]) + v[2] * (v[3] * v[7] - v[4] * v[6]);
  };
  for (std::size_t i = 0; i < 9; ++i) {
    std::vector<double> up(a.begin(), a.end()), dn(a.begin(), a.end());
    up[i] += 1e-3;
    dn[i] -= 1e-3;
    CHECK(mp.grad()[i] == doctest::Approx((det_of(up) - det_of(dn)) / 2e-3).epsilon(1e-9));
  }
}

TEST_CASE("l2_normalize_rows yields unit rows") {
  Rng rng(5);
  auto x = Tensor<float>::constant({4, 7}, [&] {
    std::vector<float> v(28);
    for (auto& e : v) e = static_cast<float>(rng.uniform(-3.0, 3.0));
    return v;
  }());
  auto y = l2_normalize_rows(x);
  for (std::size_t r = 0; r < 4; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < 7; ++j) ss += double(y.data()[r * 7 + j]) * y.data()[r * 7 + j];
    CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(l2_normalize_rows(Td::zeros({1, 3})), DomainError);
}

TEST_CASE("grad_check on a linear function is exact") {
  Rng rng(1);
  auto w = random_tensor({3, 4}, rng);
  auto f = [w](const std::vector<Td>& in) { return sum_all(matmul(w, in[0])); };
  CHECK(check(f, {random_tensor({4, 2}, rng)}) < 1e-6);
}

TEST_CASE("grad_check of tanh(matmul) on 4x4") {
  Rng rng(2);
  auto a = random_tensor({4, 4}, rng), b = random_tensor({4, 4}, rng);
  ScalarFn<double> f = [](const std::vector<Td>& in) { return sum_all(tanh(matmul(in[0], in[1]))); };
  CHECK(check(f, {a, b}) < 1e-3);

  // The f32 instantiation runs the same kernels; its analytic gradient must
  // agree with the f64 one to single precision.
  auto af = Tf::parameter({4, 4}, std::vector<float>(a.data().begin(), a.data().end()));
  auto bf = Tf::constant({4, 4}, std::vector<float>(b.data().begin(), b.data().end()));
  backward(sum_all(tanh(matmul(af, bf))));
  auto ad = Td::parameter({4, 4}, std::vector<double>(a.data().begin(), a.data().end()));
  backward(sum_all(tanh(matmul(ad, b))));
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(af.grad()[i] - ad.grad()[i]) < 1e-5);
}

TEST_CASE("grad_check reports the error at a clamped sqrt") {
  // At the floor, the one-sided kink makes the central difference disagree
  // with the zero analytic gradient; the checker must surface that.
  ScalarFn<double> f = [](const std::vector<Td>& in) { return sum_all(sqrt(clamp_min(in[0], 1e-12))); };
  auto r = grad_check<double>(f, {Td::constant({1}, {1e-12})}, 1e-13);
  CHECK(r.max_rel_error > 0.5);
}

TEST_CASE("mean squared residual gradient matches finite differences") {
  Rng rng(3);
  auto A = random_tensor({5, 3}, rng);
  auto b = random_tensor({5, 1}, rng);
  auto f = [A, b](const std::vector<Td>& in) {
    auto r = sub(matmul(A, in[0]), b);
    return mean_all(mul(r, r));
  };
  CHECK(check(f, {random_tensor({3, 1}, rng)}) < 1e-3);
}

TEST_CASE("every primitive passes grad_check on 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    Rng rng(100 + seed);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), row = random_tensor({4}, rng);
    auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    auto sq = random_tensor({4, 2}, rng);
    auto batch = random_tensor({2, 3, 4}, rng);
    auto m3 = random_tensor({2, 3, 3}, rng);
    const auto ws = [seed](const Td& y) { return weighted_sum(y, seed); };
    CHECK(check([&](auto& in) { return ws(add(in[0], in[1])); }, {a, row}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(sub(in[0], in[1])); }, {a, b}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(mul(in[0], in[1])); }, {a, row}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(scale(add_scalar(in[0], 0.3), -1.7)); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(matmul(in[0], in[1])); }, {a, sq}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(matmul(in[0], in[1])); }, {batch, random_tensor({2, 4, 3}, rng)}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(transpose(in[0])); }, {batch}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(tanh(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(exp(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(log(in[0])); }, {pos}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(sqrt(in[0])); }, {pos}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(relu(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(sum_axis(in[0], 1)); }, {batch}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(mean_axis(in[0], 0)); }, {batch}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(concat<double>({in[0], in[1]}, 0)); }, {a, b}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(slice(in[0], 2, 1, 2)); }, {batch}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(reshape(in[0], {4, 3})); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(l2_normalize_rows(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(softmax_rows(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(log_softmax_rows(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(layer_norm_rows(in[0])); }, {a}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(det3(in[0])); }, {m3}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(scaled_dot_attention(in[0], in[1], in[2])); },
                {batch, random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng)}) < 1e-3);
    CHECK(check([&](auto& in) { return ws(gather_rows(in[0], {2, 0, 2})); }, {a}) < 1e-3);
  }
}

TEST_CASE("gradient of a sum is the sum of gradients") {
  Rng rng(9);
  auto x0 = random_tensor({2, 3}, rng);
  auto grad_of = [&](auto f) {
    auto x = Td::parameter(x0.shape(), std::vector<double>(x0.data().begin(), x0.data().end()));
    backward(f(x));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  auto f = [](const Td& x) { return sum_all(tanh(x)); };
  auto g = [](const Td& x) { return sum_all(mul(x, x)); };
  auto fg = grad_of([&](const Td& x) { return add(f(x), g(x)); });
  auto gf = grad_of(f), gg = grad_of(g);
  for (std::size_t i = 0; i < fg.size(); ++i) CHECK(fg[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-14));
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Rng rng(77);
    std::vector<float> v(64);
    for (auto& e : v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto x = Tf::parameter({2, 4, 8}, v);
    auto w = Tf::parameter({8, 8}, std::vector<float>(v.begin(), v.end()));
    auto y = layer_norm_rows(scaled_dot_attention(matmul(x, w), x, x));
    auto loss = mean_all(mul(y, y));
    backward(loss);
    std::vector<float> out(y.data().begin(), y.data().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}
