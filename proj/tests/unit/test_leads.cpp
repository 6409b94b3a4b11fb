#include <cmath>

#include "doctest.h"
#include "ecglab/error.hpp"
#include "ecglab/leads/lead_rules.hpp"
#include "ecglab/random.hpp"
#include "ecglab/signal/synth.hpp"

using namespace ecglab;

namespace {

std::vector<float> v1(float x) { return {x}; }

EcgRecord consistent_record(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  auto r = EcgRecord::zeros(500.0, n);
  for (auto l : {Lead::I, Lead::II, Lead::V1, Lead::V2, Lead::V3, Lead::V4, Lead::V5, Lead::V6})
    for (auto& v : r.lead(l)) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  derive_limb_from_I_II(r.lead(Lead::I), r.lead(Lead::II),
                        LimbOutputs{r.lead(Lead::III), r.lead(Lead::aVR), r.lead(Lead::aVL), r.lead(Lead::aVF)});
  return r;
}

}  // namespace

TEST_CASE("limb lead derivation") {
  auto z = derive_limb_from_I_II(v1(0), v1(0));
  CHECK(z.III[0] == 0.0f);
  CHECK(z.aVR[0] == 0.0f);
  auto d = derive_limb_from_I_II(v1(1), v1(1));
  CHECK(d.III[0] == 0.0f);
  CHECK(d.aVR[0] == -1.0f);
  CHECK(d.aVL[0] == 0.5f);
  CHECK(d.aVF[0] == 0.5f);
  CHECK_THROWS_AS(derive_limb_from_I_II(std::vector<float>(3), std::vector<float>(4)), ShapeError);
}

TEST_CASE("Einthoven refinement") {
  auto f = refine_einthoven(v1(1), v1(3), v1(2));
  CHECK(f.I[0] == 1.0f);
  CHECK(f.II[0] == 3.0f);
  CHECK(f.III[0] == 2.0f);
  auto r = refine_einthoven(v1(1), v1(1), v1(1));
  CHECK(std::abs(f.I[0] - 1.0) < 1e-7);
  CHECK(std::abs(r.I[0] - 2.0 / 3.0) < 1e-7);
  CHECK(std::abs(r.II[0] - 4.0 / 3.0) < 1e-7);
  CHECK(std::abs(r.III[0] - 2.0 / 3.0) < 1e-7);

  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const float a = float(rng.uniform(-2, 2)), b = float(rng.uniform(-2, 2)), c = float(rng.uniform(-2, 2));
    const auto p = refine_einthoven(v1(a), v1(b), v1(c));
    const double ri = a - p.I[0], rii = b - p.II[0], riii = c - p.III[0];
    // Residual parallel to (1, -1, 1): orthogonal to two spanning vectors of the plane.
    CHECK(std::abs(ri + rii) < 1e-6);   // against (1, 1, 0)
    CHECK(std::abs(rii + riii) < 1e-6);  // against (0, 1, 1)
    CHECK(std::abs(double(p.I[0]) - p.II[0] + p.III[0]) < 1e-6);
    const auto q = refine_einthoven(p.I, p.II, p.III);
    CHECK(std::abs(q.I[0] - p.I[0]) < 1e-7);
    CHECK(std::abs(q.II[0] - p.II[0]) < 1e-7);
  }
}

TEST_CASE("Goldberger refinement") {
  auto z = refine_goldberger(v1(0), v1(0), v1(0));
  CHECK(z.aVR[0] == 0.0f);
  auto g = refine_goldberger(v1(1), v1(1), v1(0));
  CHECK(g.aVR[0] == -1.0f);
  CHECK(g.aVL[0] == 0.5f);
  CHECK(g.aVF[0] == 0.5f);
  CHECK_THROWS_AS(refine_goldberger(v1(1), v1(1), v1(1)), ContractError);
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const float i = float(rng.uniform(-1, 1)), ii = float(rng.uniform(-1, 1));
    auto a = refine_goldberger(v1(i), v1(ii), v1(ii - i));
    CHECK(std::abs(double(a.aVR[0]) + a.aVL[0] + a.aVF[0]) < 1e-6);
    // Derivation then refinement is the identity.
    auto d = derive_limb_from_I_II(v1(i), v1(ii));
    auto e = refine_einthoven(v1(i), v1(ii), d.III);
    CHECK(std::abs(e.I[0] - i) < 1e-6);
    CHECK(std::abs(e.II[0] - ii) < 1e-6);
  }
}

TEST_CASE("rule loss") {
  const auto x = consistent_record(1, 64);
  CHECK(rule_loss(x, x) < 1e-12);
  auto xh = EcgRecord::zeros(500.0, 1);
  xh.lead(Lead::I)[0] = 1.0f;
  // Refined triple (2/3, 1/3, -1/3), augmented (-1/2, 1/2, 0): 0.5*(6/27) + 0.5*(1/6).
  CHECK(rule_loss(xh, EcgRecord::zeros(500.0, 1)) == doctest::Approx(7.0 / 36.0).epsilon(1e-7));
  CHECK(7.0 / 36.0 == doctest::Approx(0.19444).epsilon(1e-4));

  Rng rng(5);
  auto noisy = x;
  for (std::size_t l = 0; l < 12; ++l)
    for (auto& v : noisy.lead(l)) v += static_cast<float>(rng.normal(0.0, 0.1));
  const double base = rule_loss(noisy, x);
  CHECK(base > 0);
  CHECK(rule_loss(noisy, x, {1.0, 1.0}) == doctest::Approx(2 * base).epsilon(1e-12));
  CHECK_THROWS_AS(rule_loss(noisy, EcgRecord::zeros(500.0, 65)), ShapeError);
  CHECK_THROWS_AS(rule_loss(noisy, EcgRecord::zeros(250.0, 64)), ShapeError);
  CHECK_THROWS_AS(rule_loss(noisy, x, {-1.0, 0.5}), ParameterError);
}

TEST_CASE("snr") {
  std::vector<float> ref(5000);
  Rng rng(7);
  for (auto& v : ref) v = static_cast<float>(std::sin(0.01 * (&v - ref.data())) + 0.2);
  CHECK(snr_db(ref, ref) == kSnrCapDb);
  std::vector<float> neg(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) neg[i] = -ref[i];
  CHECK(snr_db(ref, neg) == doctest::Approx(10 * std::log10(0.25)).epsilon(1e-6));

  // Noise rescaled to exactly 1e-4 of the signal power.
  std::vector<double> noise(ref.size());
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    noise[i] = rng.normal();
    ps += double(ref[i]) * ref[i];
    pn += noise[i] * noise[i];
  }
  const double k = std::sqrt(ps / pn / 1e4);
  std::vector<float> cand(ref.size()), cand10(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    cand[i] = static_cast<float>(ref[i] + k * noise[i]);
    cand10[i] = static_cast<float>(ref[i] + 10 * k * noise[i]);
  }
  CHECK(std::abs(snr_db(ref, cand) - 40.0) < 0.5);
  CHECK(snr_db(ref, cand) - snr_db(ref, cand10) == doctest::Approx(20.0).epsilon(1e-3));
  CHECK_THROWS_AS(snr_db(std::vector<float>(10, 0.0f), std::vector<float>(10, 1.0f)), UndefinedError);
}

TEST_CASE("derived lead SNR of synthetic records") {
  SynthParams p;
  const auto clean = synth_ecg(p).record;
  for (double s : derived_lead_snr(clean)) CHECK(s == kSnrCapDb);
  CHECK(einthoven_residual_rms(clean) < 1e-7);
  p.noise_sigma = 0.02;
  const auto noisy = synth_ecg(p).record;
  for (double s : derived_lead_snr(noisy)) CHECK(s < 60.0);
  CHECK(einthoven_residual_rms(noisy) > 0.01);
}
