#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecglab/signal/record.hpp"

namespace ecglab {

/// The six limb leads of one recording.
struct LimbLeadSet {
  std::vector<float> I, II, III, aVR, aVL, aVF;

  static LimbLeadSet from_record(const EcgRecord& record);
  /// Equal lengths and finite values; throws ShapeError / ParameterError.
  void validate() const;
};

/// Writable destination for the four leads implied by I and II.
struct LimbOutputs {
  std::span<float> III, aVR, aVL, aVF;
};

struct DerivedLimbLeads {
  std::vector<float> III, aVR, aVL, aVF;
};

/// III = II - I, aVR = -(I + II)/2, aVL = I - II/2, aVF = II - I/2.
void derive_limb_from_I_II(std::span<const float> I, std::span<const float> II, LimbOutputs out);
DerivedLimbLeads derive_limb_from_I_II(std::span<const float> I, std::span<const float> II);

struct EinthovenTriple {
  std::vector<float> I, II, III;
};

struct AugmentedTriple {
  std::vector<float> aVR, aVL, aVF;
};

/// Orthogonal projection of (I, II, III) onto the plane I - II + III = 0.
EinthovenTriple refine_einthoven(std::span<const float> I_hat, std::span<const float> II_hat,
                                 std::span<const float> III_hat);

/// Goldberger leads of an Einthoven-consistent triple. Throws ContractError
/// when |I - II + III| exceeds kConsistencyTolerance at any sample.
AugmentedTriple refine_goldberger(std::span<const float> I_ref, std::span<const float> II_ref,
                                  std::span<const float> III_ref);

inline constexpr double kConsistencyTolerance = 1e-4;

struct RuleWeights {
  double w_e = 0.5;
  double w_g = 0.5;

  void validate() const;
};

/// Soft lead-consistency loss: w_E * MSE(refined I/II/III, true I/II/III)
/// + w_G * MSE(refined aVR/aVL/aVF, true aVR/aVL/aVF), refinement taken from x_hat.
double rule_loss(const EcgRecord& x_hat, const EcgRecord& x, const RuleWeights& w = {});

inline constexpr double kSnrCapDb = 120.0;

/// 10 log10(sum ref^2 / sum (ref - cand)^2), capped at +120 dB.
/// Throws UndefinedError for an all-zero reference.
double snr_db(std::span<const float> reference, std::span<const float> candidate);

/// Leads audited by the SNR report, in report order.
inline constexpr std::array<Lead, 4> kDerivedLeads = {Lead::III, Lead::aVR, Lead::aVL, Lead::aVF};

/// SNR of each recorded derived lead against its value computed from I and II.
std::array<double, 4> derived_lead_snr(const EcgRecord& record);

struct SnrReportRow {
  Lead lead;
  double mean_snr_db;
  std::size_t n_records;
};

/// Per-record derived-lead SNR averaged across records.
std::vector<SnrReportRow> snr_report(const std::vector<const EcgRecord*>& records);
/// "lead,mean_snr_db,n_records" CSV, preceded by one '#' comment line that
/// states the averaging convention.
std::string snr_report_csv(const std::vector<SnrReportRow>& rows);

/// RMS over samples of I - II + III.
double einthoven_residual_rms(const EcgRecord& record);

}  // namespace ecglab
