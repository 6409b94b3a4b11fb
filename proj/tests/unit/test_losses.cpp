#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ecglab/ad/grad_check.hpp"
#include "ecglab/error.hpp"
#include "ecglab/losses/losses.hpp"
#include "ecglab/random.hpp"

using namespace ecglab;
using namespace ecglab::ad;
using Td = Tensor<double>;
using Mat = std::vector<std::vector<double>>;

namespace {

Td random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Td::constant(std::move(shape), std::move(v));
}

Td from_rows(const Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return Td::constant({m.size(), m[0].size()}, v);
}

Mat to_rows(const Td& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.data()[i * t.dim(1) + j];
  return m;
}

std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Plain smoothed cross-entropy in both directions.
double ce_oracle(const Mat& logits, double eps) {
  const std::size_t b = logits.size();
  double total = 0;
  for (int dir = 0; dir < 2; ++dir) {
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> row(b);
      for (std::size_t j = 0; j < b; ++j) row[j] = dir == 0 ? logits[i][j] : logits[j][i];
      double mx = *std::max_element(row.begin(), row.end()), z = 0;
      for (double x : row) z += std::exp(x - mx);
      for (std::size_t j = 0; j < b; ++j) {
        const double y = (i == j ? 1 - eps : 0) + eps / b;
        total -= y * (row[j] - mx - std::log(z));
      }
    }
  }
  return total / (2.0 * b);
}

double contrastive_oracle(const Mat& zi, const Mat& zt, double tau, double eps) {
  Mat logits(zi.size(), std::vector<double>(zi.size()));
  for (std::size_t i = 0; i < zi.size(); ++i)
    for (std::size_t j = 0; j < zi.size(); ++j) logits[i][j] = tau * dot(unit(zi[i]), unit(zt[j]));
  return ce_oracle(logits, eps);
}

double det3_oracle(const Mat& g) {
  return g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
         g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
}

double volume_oracle(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c,
                     double floor = 1e-12) {
  const std::vector<std::vector<double>> v = {unit(a), unit(b), unit(c)};
  Mat g(3, std::vector<double>(3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g[i][j] = dot(v[i], v[j]);
  return std::sqrt(std::max(std::abs(det3_oracle(g)), floor));
}

Td vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Td::constant({n}, std::move(v));
}

std::vector<double> random_vec(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("contrastive loss with a single pair is zero") {
  Rng rng(1);
  CHECK(contrastive_loss(random_tensor({1, 5}, rng), random_tensor({1, 5}, rng), Td::scalar(14.29), 0.1).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("contrastive loss on an orthonormal pair") {
  auto z = from_rows({{1, 0}, {0, 1}});
  CHECK(contrastive_loss(z, z, Td::scalar(1.0), 0.0).item() == doctest::Approx(std::log(1 + std::exp(-1.0))));
  CHECK(std::log(1 + std::exp(-1.0)) == doctest::Approx(0.3133).epsilon(1e-4));
}

TEST_CASE("contrastive loss matches a plain oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto zi = random_tensor({4, 6}, rng), zt = random_tensor({4, 6}, rng);
    const double got = contrastive_loss(zi, zt, Td::scalar(3.5), 0.1).item();
    CHECK(got == doctest::Approx(contrastive_oracle(to_rows(zi), to_rows(zt), 3.5, 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("contrastive and gram losses ignore simultaneous row permutation") {
  Rng rng(4);
  Mat zi = to_rows(random_tensor({5, 4}, rng)), zt = to_rows(random_tensor({5, 4}, rng)), zs = to_rows(random_tensor({5, 4}, rng));
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Mat pi, pt, ps;
  for (auto p : perm) {
    pi.push_back(zi[p]);
    pt.push_back(zt[p]);
    ps.push_back(zs[p]);
  }
  auto tau = Td::scalar(7.0);
  CHECK(contrastive_loss(from_rows(zi), from_rows(zt), tau, 0.1).item() ==
        doctest::Approx(contrastive_loss(from_rows(pi), from_rows(pt), tau, 0.1).item()).epsilon(1e-12));
  auto v = volume_matrix(from_rows(zi), from_rows(zt), from_rows(zs));
  auto vp = volume_matrix(from_rows(pi), from_rows(pt), from_rows(ps));
  CHECK(gram_loss(v, tau, 0.1).item() == doctest::Approx(gram_loss(vp, tau, 0.1).item()).epsilon(1e-12));
}

TEST_CASE("embedding shape mismatch is a shape error") {
  CHECK_THROWS_AS(contrastive_loss(Td::full({3, 4}, 1.0), Td::full({2, 4}, 1.0), Td::scalar(1.0), 0.1), ShapeError);
  CHECK_THROWS_AS(gram_loss(Td::full({2, 3}, 1.0), Td::scalar(1.0), 0.1), ShapeError);
  CHECK_THROWS_AS(recon_mse(Td::full({12, 4}, 1.0), Td::full({12, 5}, 1.0)), ShapeError);
}

TEST_CASE("gram volume reference cases") {
  CHECK(gram_volume(vec({1, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1})).item() == doctest::Approx(1.0).epsilon(1e-12));
  auto u = vec({0.6, 0.8, 0.0});
  CHECK(gram_volume(u, u, u).item() == doctest::Approx(1e-6).epsilon(1e-9));
  // e1, e2 and their bisector are coplanar: det G = 1(1 - 1/2) - 0 + (1/sqrt2)(0 - 1/sqrt2) = 0.
  const double r = 1 / std::sqrt(2.0);
  Mat g = {{1, 0, r}, {0, 1, r}, {r, r, 1}};
  CHECK(det3_oracle(g) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(gram_volume(vec({1, 0}), vec({0, 1}), vec({r, r})).item() == doctest::Approx(1e-6).epsilon(1e-6));
  CHECK_THROWS_AS(gram_volume(vec({0, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1})), DomainError);
}

TEST_CASE("volume matrix entries match the per-triple oracle") {
  Rng rng(8);
  auto zi = random_tensor({3, 5}, rng), zt = random_tensor({3, 5}, rng), zs = random_tensor({3, 5}, rng);
  auto v = to_rows(volume_matrix(zi, zt, zs));
  auto ri = to_rows(zi), rt = to_rows(zt), rs = to_rows(zs);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(v[i][j] == doctest::Approx(volume_oracle(ri[i], rt[j], rs[j])).epsilon(1e-12));
}

TEST_CASE("gram volume invariants on random triples") {
  Rng rng(21);
  for (int k = 0; k < 100; ++k) {
    auto a = random_vec(rng, 6), b = random_vec(rng, 6), c = random_vec(rng, 6);
    const double v = gram_volume(vec(a), vec(b), vec(c)).item();
    CHECK(v <= 1.0 + 1e-12);
    CHECK(v >= 1e-6 - 1e-15);
    CHECK(gram_volume(vec(c), vec(a), vec(b)).item() == doctest::Approx(v).epsilon(1e-10));
    CHECK(gram_volume(vec(b), vec(a), vec(c)).item() == doctest::Approx(v).epsilon(1e-10));
    auto a2 = a;
    const double s = rng.uniform(0.01, 50.0);
    for (auto& x : a2) x *= s;
    CHECK(gram_volume(vec(a2), vec(b), vec(c)).item() == doctest::Approx(v).epsilon(1e-10));
  }
}

TEST_CASE("gram loss reference case and monotonicity") {
  auto v = from_rows({{0, 1}, {1, 0}});
  CHECK(gram_loss(v, Td::scalar(1.0), 0.0).item() == doctest::Approx(std::log(1 + std::exp(-1.0))));
  CHECK(gram_loss(from_rows({{0.4}}), Td::scalar(5.0), 0.1).item() == doctest::Approx(0.0).epsilon(1e-12));
  Rng rng(13);
  for (int k = 0; k < 20; ++k) {
    Mat m = to_rows(random_tensor({4, 4}, rng, 0.0, 1.0));
    const double before = gram_loss(from_rows(m), Td::scalar(10.0), 0.1).item();
    const std::size_t d = rng.below(4);
    m[d][d] -= rng.uniform(0.0, m[d][d]);
    CHECK(gram_loss(from_rows(m), Td::scalar(10.0), 0.1).item() <= before + 1e-12);
  }
}

TEST_CASE("reconstruction mse") {
  Rng rng(2);
  auto x = random_tensor({12, 8}, rng);
  CHECK(recon_mse(x, x).item() == 0.0);
  CHECK(recon_mse(add_scalar(x, 1.0), x).item() == doctest::Approx(1.0).epsilon(1e-14));
  auto a = random_tensor({2, 4}, rng), b = random_tensor({2, 4}, rng);
  double s = 0;
  for (std::size_t i = 0; i < 8; ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  CHECK(recon_mse(a, b).item() == doctest::Approx(s / 8).epsilon(1e-14));
}

TEST_CASE("tensor rule loss agrees with the plain implementation") {
  Rng rng(6);
  for (int k = 0; k < 5; ++k) {
    std::vector<float> xv(12 * 50), yv(12 * 50);
    for (auto& v : xv) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : yv) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const EcgRecord xh(100.0, 50, xv), x(100.0, 50, yv);
    const double plain = ecglab::rule_loss(xh, x);
    auto th = Tensor<float>::constant({12, 50}, xv), tx = Tensor<float>::constant({12, 50}, yv);
    CHECK(std::abs(ecglab::rule_loss(th, tx).item() - plain) < 1e-6);
    // Batched layout gives the batch mean of the per-record values.
    auto bh = concat<float>({reshape(th, {1, 12, 50}), reshape(th, {1, 12, 50})}, 0);
    auto bx = concat<float>({reshape(tx, {1, 12, 50}), reshape(tx, {1, 12, 50})}, 0);
    CHECK(std::abs(ecglab::rule_loss(bh, bx).item() - plain) < 1e-6);
  }
  // Offset of one on lead I only, ground truth zero: 7/36.
  std::vector<float> off(12, 0.0f);
  off[0] = 1.0f;
  CHECK(ecglab::rule_loss(Td::constant({12, 1}, std::vector<double>(off.begin(), off.end())), Td::zeros({12, 1})).item() ==
        doctest::Approx(7.0 / 36.0).epsilon(1e-14));
}

TEST_CASE("rule loss gradient has no component along the Einthoven residual") {
  // Both terms see x_hat only through the projection, so moving (I, II, III)
  // along (1, -1, 1) leaves the loss unchanged.
  Rng rng(17);
  auto xh = Td::parameter({2, 12, 30}, to_rows(random_tensor({1, 720}, rng))[0]);
  auto x = random_tensor({2, 12, 30}, rng);
  backward(ecglab::rule_loss(xh, x));
  const auto g = xh.grad();
  double worst = 0, scale = 0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 30; ++t) {
      const auto at = [&](std::size_t lead) { return g[(b * 12 + lead) * 30 + t]; };
      worst = std::max(worst, std::abs(at(0) - at(1) + at(2)));
      scale = std::max({scale, std::abs(at(0)), std::abs(at(1))});
    }
  CHECK(scale > 1e-4);
  CHECK(worst < 1e-15);
  // Non-limb leads get no gradient at all.
  for (std::size_t lead = 3; lead < 12; ++lead) CHECK(g[lead * 30] == 0.0);
}

TEST_CASE("total loss weighting") {
  LossWeights w;
  LossParts<double> ones{Td::scalar(1), Td::scalar(1), Td::scalar(1), Td::scalar(1)};
  auto t = total_loss(ones, w);
  CHECK(t.total.item() == doctest::Approx(0.1 + 0.05 + 1.0 * (1 + 0.1)));
  CHECK(t.parts.total == doctest::Approx(1.25));
  CHECK(total_loss(ones, LossWeights{0, 0, 0, 0}).total.item() == 0.0);
  LossParts<double> p{Td::scalar(0.7), Td::scalar(2.0), Td::scalar(0.3), Td::scalar(0.9)};
  CHECK(total_loss(p, LossWeights{0, 2.5, 0, 0.1}).total.item() == doctest::Approx(2.5 * (0.3 + 0.1 * 0.9)));
  CHECK(t.parts.l_gram == 1.0);

  LossParts<double> bad{Td::scalar(1), Td::scalar(std::nan("")), Td::scalar(1), Td::scalar(1)};
  try {
    total_loss(bad, w);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("l_gram") != std::string::npos);
  }
  CHECK_THROWS_AS(LossWeights{.alpha = -1}.validate(), ParameterError);
  CHECK_THROWS_AS(LossWeights{.epsilon_smooth = 1.0}.validate(), ParameterError);
}

TEST_CASE("temperatures start at 14.29 and stay clamped") {
  auto t = Temperatures<float>::init();
  CHECK(t.tau_ctr().item() == doctest::Approx(14.29).epsilon(1e-5));
  t.s_ctr.mutable_data()[0] = 10.0f;
  t.s_gram.mutable_data()[0] = -3.0f;
  t.clamp();
  CHECK(t.tau_ctr().item() == doctest::Approx(100.0).epsilon(1e-5));
  CHECK(t.tau_gram().item() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("all five losses pass grad_check on 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    Rng rng(500 + seed);
    const auto zi = random_tensor({4, 6}, rng), zt = random_tensor({4, 6}, rng), zs = random_tensor({4, 6}, rng);
    const auto s = Td::constant({1}, {rng.uniform(0.0, 2.0)});
    const double h = 1e-5;
    auto ctr = [](const std::vector<Td>& in) { return contrastive_loss(in[0], in[1], exp(in[2]), 0.1); };
    CHECK(grad_check<double>(ctr, {zi, zt, s}, h).max_rel_error < 1e-3);
    auto gram = [](const std::vector<Td>& in) { return gram_loss(volume_matrix(in[0], in[1], in[2]), exp(in[3]), 0.1); };
    CHECK(grad_check<double>(gram, {zi, zt, zs, s}, h).max_rel_error < 1e-3);
    const auto xh = random_tensor({2, 12, 5}, rng), x = random_tensor({2, 12, 5}, rng);
    auto mse = [](const std::vector<Td>& in) { return recon_mse(in[0], in[1]); };
    CHECK(grad_check<double>(mse, {xh, x}, h).max_rel_error < 1e-3);
    auto rule = [x](const std::vector<Td>& in) { return ecglab::rule_loss(in[0], x); };
    CHECK(grad_check<double>(rule, {xh}, h).max_rel_error < 1e-3);
    auto total = [x](const std::vector<Td>& in) {
      LossParts<double> p{contrastive_loss(in[0], in[1], exp(in[3]), 0.1),
                          gram_loss(volume_matrix(in[0], in[1], in[2]), exp(in[3]), 0.1), recon_mse(in[4], x),
                          ecglab::rule_loss(in[4], x)};
      return total_loss(p, LossWeights{}).total;
    };
    CHECK(grad_check<double>(total, {zi, zt, zs, s, xh}, h).max_rel_error < 1e-3);
  }
}
