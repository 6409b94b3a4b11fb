#include "ecglab/leads/lead_rules.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "ecglab/error.hpp"

namespace ecglab {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

std::vector<float> copy(std::span<const float> s) { return {s.begin(), s.end()}; }

}  // namespace

LimbLeadSet LimbLeadSet::from_record(const EcgRecord& record) {
  return {copy(record.lead(Lead::I)),   copy(record.lead(Lead::II)),
          copy(record.lead(Lead::III)), copy(record.lead(Lead::aVR)),
          copy(record.lead(Lead::aVL)), copy(record.lead(Lead::aVF))};
}

void LimbLeadSet::validate() const {
  const std::size_t n = I.size();
  for (const auto* lead : {&II, &III, &aVR, &aVL, &aVF}) {
    require_same_length(n, lead->size(), "limb lead set");
  }
  for (const auto* lead : {&I, &II, &III, &aVR, &aVL, &aVF}) {
    for (float v : *lead) {
      if (!std::isfinite(v)) throw ParameterError("limb lead set: non-finite value");
    }
  }
}

void derive_limb_from_I_II(std::span<const float> I, std::span<const float> II, LimbOutputs out) {
  require_same_length(I.size(), II.size(), "derive_limb_from_I_II");
  for (auto s : {out.III, out.aVR, out.aVL, out.aVF}) {
    require_same_length(I.size(), s.size(), "derive_limb_from_I_II");
  }
  for (std::size_t t = 0; t < I.size(); ++t) {
    const double i = I[t];
    const double ii = II[t];
    out.III[t] = static_cast<float>(ii - i);
    out.aVR[t] = static_cast<float>(-(i + ii) / 2.0);
    out.aVL[t] = static_cast<float>(i - ii / 2.0);
    out.aVF[t] = static_cast<float>(ii - i / 2.0);
  }
}

DerivedLimbLeads derive_limb_from_I_II(std::span<const float> I, std::span<const float> II) {
  require_same_length(I.size(), II.size(), "derive_limb_from_I_II");
  DerivedLimbLeads d;
  for (auto* v : {&d.III, &d.aVR, &d.aVL, &d.aVF}) v->resize(I.size());
  derive_limb_from_I_II(I, II, LimbOutputs{d.III, d.aVR, d.aVL, d.aVF});
  return d;
}

EinthovenTriple refine_einthoven(std::span<const float> I_hat, std::span<const float> II_hat,
                                 std::span<const float> III_hat) {
  require_same_length(I_hat.size(), II_hat.size(), "refine_einthoven");
  require_same_length(I_hat.size(), III_hat.size(), "refine_einthoven");
  const std::size_t n = I_hat.size();
  EinthovenTriple out{std::vector<float>(n), std::vector<float>(n), std::vector<float>(n)};
  for (std::size_t t = 0; t < n; ++t) {
    const double i = I_hat[t];
    const double ii = II_hat[t];
    const double iii = III_hat[t];
    const double i_ref = (2.0 * i + ii - iii) / 3.0;
    const double iii_ref = (-i + ii + 2.0 * iii) / 3.0;
    out.I[t] = static_cast<float>(i_ref);
    out.III[t] = static_cast<float>(iii_ref);
    out.II[t] = static_cast<float>(i_ref + iii_ref);
  }
  return out;
}

AugmentedTriple refine_goldberger(std::span<const float> I_ref, std::span<const float> II_ref,
                                  std::span<const float> III_ref) {
  require_same_length(I_ref.size(), II_ref.size(), "refine_goldberger");
  require_same_length(I_ref.size(), III_ref.size(), "refine_goldberger");
  const std::size_t n = I_ref.size();
  AugmentedTriple out{std::vector<float>(n), std::vector<float>(n), std::vector<float>(n)};
  for (std::size_t t = 0; t < n; ++t) {
    const double i = I_ref[t];
    const double ii = II_ref[t];
    const double residual = i - ii + static_cast<double>(III_ref[t]);
    if (std::abs(residual) > kConsistencyTolerance) {
      throw ContractError("refine_goldberger: input violates I + III = II at sample " +
                          std::to_string(t) + " (residual " + std::to_string(residual) + " mV)");
    }
    out.aVR[t] = static_cast<float>(-(i + ii) / 2.0);
    out.aVL[t] = static_cast<float>(i - ii / 2.0);
    out.aVF[t] = static_cast<float>(ii - i / 2.0);
  }
  return out;
}

void RuleWeights::validate() const {
  if (!(w_e >= 0.0) || !(w_g >= 0.0)) throw ParameterError("rule weights must be >= 0");
}

double rule_loss(const EcgRecord& x_hat, const EcgRecord& x, const RuleWeights& w) {
  w.validate();
  if (x_hat.n_samples() != x.n_samples() || x_hat.fs() != x.fs()) {
    throw ShapeError("rule_loss: records differ in length or sampling rate");
  }
  const auto ref = refine_einthoven(x_hat.lead(Lead::I), x_hat.lead(Lead::II), x_hat.lead(Lead::III));
  const auto aug = refine_goldberger(ref.I, ref.II, ref.III);

  auto sq_err = [](std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      const double d = static_cast<double>(a[t]) - static_cast<double>(b[t]);
      acc += d * d;
    }
    return acc;
  };
  const double count = 3.0 * static_cast<double>(x.n_samples());
  const double mse_e = (sq_err(ref.I, x.lead(Lead::I)) + sq_err(ref.II, x.lead(Lead::II)) +
                        sq_err(ref.III, x.lead(Lead::III))) /
                       count;
  const double mse_g = (sq_err(aug.aVR, x.lead(Lead::aVR)) + sq_err(aug.aVL, x.lead(Lead::aVL)) +
                        sq_err(aug.aVF, x.lead(Lead::aVF))) /
                       count;
  return w.w_e * mse_e + w.w_g * mse_g;
}

double snr_db(std::span<const float> reference, std::span<const float> candidate) {
  require_same_length(reference.size(), candidate.size(), "snr_db");
  double signal = 0.0;
  double error = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const double r = reference[t];
    const double e = r - static_cast<double>(candidate[t]);
    signal += r * r;
    error += e * e;
  }
  if (!(signal > 0.0)) throw UndefinedError("snr_db: reference has zero power");
  if (error <= 1e-12 * signal) return kSnrCapDb;
  return 10.0 * std::log10(signal / error);
}

std::array<double, 4> derived_lead_snr(const EcgRecord& record) {
  const auto derived = derive_limb_from_I_II(record.lead(Lead::I), record.lead(Lead::II));
  const std::array<const std::vector<float>*, 4> computed = {&derived.III, &derived.aVR,
                                                             &derived.aVL, &derived.aVF};
  std::array<double, 4> out{};
  for (std::size_t k = 0; k < kDerivedLeads.size(); ++k) {
    out[k] = snr_db(record.lead(kDerivedLeads[k]), *computed[k]);
  }
  return out;
}

std::vector<SnrReportRow> snr_report(const std::vector<const EcgRecord*>& records) {
  if (records.empty()) throw DataError("snr_report: no records");
  std::array<double, 4> sum{};
  for (const EcgRecord* r : records) {
    const auto s = derived_lead_snr(*r);
    for (std::size_t k = 0; k < s.size(); ++k) sum[k] += s[k];
  }
  std::vector<SnrReportRow> rows;
  for (std::size_t k = 0; k < kDerivedLeads.size(); ++k) {
    rows.push_back({kDerivedLeads[k], sum[k] / static_cast<double>(records.size()), records.size()});
  }
  return rows;
}

std::string snr_report_csv(const std::vector<SnrReportRow>& rows) {
  std::string out = "# SNR (dB) of each recorded lead against its value derived from I and II; per-record values averaged across records\n";
  out += "lead,mean_snr_db,n_records\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.4f,%zu\n", r.mean_snr_db, r.n_records);
    out += std::string(name(r.lead)) + buf;
  }
  return out;
}

double einthoven_residual_rms(const EcgRecord& record) {
  auto I = record.lead(Lead::I);
  auto II = record.lead(Lead::II);
  auto III = record.lead(Lead::III);
  double acc = 0.0;
  for (std::size_t t = 0; t < record.n_samples(); ++t) {
    const double r = static_cast<double>(I[t]) - II[t] + III[t];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(record.n_samples()));
}

}  // namespace ecglab
