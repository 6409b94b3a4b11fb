#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "ecglab/signal/record.hpp"
#include "ecglab/signal/report.hpp"

namespace ecglab {

/// Gains (mV) of the five Gaussian bumps of one PQRST complex on lead II.
struct WaveAmplitudes {
  double p = 0.15;
  double q = -0.1;
  double r = 1.0;
  double s = -0.2;
  double t = 0.3;
};

struct BaselineWander {
  double amplitude_mv = 0.0;
  double frequency_hz = 0.0;
};

/// Heart-rate thresholds: rate < brady_below is bradycardia; rate > tachy_above
/// is tachycardia; anything else is normal.
struct ClassRule {
  double brady_below = 60.0;
  double tachy_above = 100.0;

  std::size_t classify(double heart_rate) const noexcept {
    if (heart_rate < brady_below) return 0;
    if (heart_rate > tachy_above) return 2;
    return 1;
  }
};

struct SynthParams {
  double heart_rate = 72.0;
  double fs = 500.0;
  double duration = 10.0;
  WaveAmplitudes waves;
  double lead_i_scale = 0.6;
  std::array<double, 6> precordial_scale = {-0.5, -0.3, 0.4, 1.1, 1.0, 0.8};
  double noise_sigma = 0.0;
  BaselineWander wander;
  std::uint64_t seed = 0;
  ClassRule class_rule;

  /// Throws ParameterError naming the first invalid field.
  void validate() const;
};

struct LabeledSample {
  EcgRecord record;
  std::size_t label = 0;
  ReportText report;
};

/// Deterministic in params (including seed). Limb leads III/aVR/aVL/aVF are
/// derived from I and II before noise and wander are added per lead.
LabeledSample synth_ecg(const SynthParams& params);

/// The clean PQRST train of one lead at unit gain scaled by `gain`, for tests.
std::vector<double> beat_train(const SynthParams& params, double gain);

}  // namespace ecglab
