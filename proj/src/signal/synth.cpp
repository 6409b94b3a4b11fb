#include "ecglab/signal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ecglab/error.hpp"
#include "ecglab/leads/lead_rules.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

namespace {

struct Bump {
  double offset_s;
  double width_s;
  double gain;
};

// Wave timing relative to the R peak. P and T offsets shrink with the RR
// interval so complexes stay separated at high rates.
std::array<Bump, 5> pqrst(const WaveAmplitudes& w, double rr) {
  const double k = std::min(1.0, std::sqrt(rr));
  return {{{-0.20 * k, 0.025, w.p},
           {-0.030, 0.010, w.q},
           {0.000, 0.012, w.r},
           {0.030, 0.010, w.s},
           {0.28 * k, 0.050 * k, w.t}}};
}

}  // namespace

void SynthParams::validate() const {
  auto bad = [](const std::string& what) { throw ParameterError("synth: " + what); };
  if (!(heart_rate >= 20.0 && heart_rate <= 300.0)) bad("heart_rate must be in [20, 300] bpm");
  if (!(fs >= 100.0) || !std::isfinite(fs)) bad("fs must be >= 100 Hz");
  if (!(duration > 0.0) || !std::isfinite(duration)) bad("duration must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) bad("noise_sigma must be >= 0");
  if (!(wander.amplitude_mv >= 0.0) || !(wander.frequency_hz >= 0.0)) {
    bad("baseline_wander amplitude and frequency must be >= 0");
  }
  if (!(class_rule.brady_below <= class_rule.tachy_above)) {
    bad("class_rule thresholds must satisfy brady_below <= tachy_above");
  }
  for (double v : {waves.p, waves.q, waves.r, waves.s, waves.t, lead_i_scale}) {
    if (!std::isfinite(v)) bad("wave amplitudes must be finite");
  }
  if (std::llround(fs * duration) < 1) bad("fs * duration must cover at least one sample");
}

std::vector<double> beat_train(const SynthParams& params, double gain) {
  const auto n_samples = static_cast<std::size_t>(std::llround(params.fs * params.duration));
  const double rr = 60.0 / params.heart_rate;
  const auto n_beats = static_cast<long>(std::llround(params.duration / rr));

  // Beats are centred in the window with a seeded jitter of at most RR/8, which
  // keeps exactly n_beats R peaks inside [0, duration).
  Rng rng(derive_seed({params.seed, 0x7068617365ULL}));
  const double jitter = rng.uniform(-rr / 8.0, rr / 8.0);
  const double t_first = (params.duration - static_cast<double>(n_beats - 1) * rr) / 2.0 + jitter;

  const auto bumps = pqrst(params.waves, rr);
  std::vector<double> out(n_samples, 0.0);
  for (long b = -1; b <= n_beats; ++b) {
    const double t_r = t_first + static_cast<double>(b) * rr;
    for (const Bump& bump : bumps) {
      const double centre = t_r + bump.offset_s;
      const double inv = 1.0 / (2.0 * bump.width_s * bump.width_s);
      // Only evaluate within 6 sigma of the bump centre.
      const double reach = 6.0 * bump.width_s;
      const auto lo = static_cast<long>(std::ceil((centre - reach) * params.fs));
      const auto hi = static_cast<long>(std::floor((centre + reach) * params.fs));
      for (long i = std::max(lo, 0L); i <= hi && i < static_cast<long>(n_samples); ++i) {
        const double dt = static_cast<double>(i) / params.fs - centre;
        out[static_cast<std::size_t>(i)] += gain * bump.gain * std::exp(-dt * dt * inv);
      }
    }
  }
  return out;
}

LabeledSample synth_ecg(const SynthParams& params) {
  params.validate();
  const auto n = static_cast<std::size_t>(std::llround(params.fs * params.duration));

  const std::vector<double> lead_ii = beat_train(params, 1.0);
  std::vector<float> samples(kNumLeads * n);
  auto row = [&](Lead l) { return samples.data() + index(l) * n; };

  for (std::size_t t = 0; t < n; ++t) {
    row(Lead::II)[t] = static_cast<float>(lead_ii[t]);
    row(Lead::I)[t] = static_cast<float>(params.lead_i_scale * lead_ii[t]);
  }
  derive_limb_from_I_II(std::span<const float>(row(Lead::I), n),
                        std::span<const float>(row(Lead::II), n),
                        LimbOutputs{std::span(row(Lead::III), n), std::span(row(Lead::aVR), n),
                                    std::span(row(Lead::aVL), n), std::span(row(Lead::aVF), n)});
  for (std::size_t k = 0; k < 6; ++k) {
    float* v = samples.data() + (index(Lead::V1) + k) * n;
    for (std::size_t t = 0; t < n; ++t) {
      v[t] = static_cast<float>(params.precordial_scale[k] * lead_ii[t]);
    }
  }

  // Per-lead corruption after derivation, one independent stream per lead.
  if (params.noise_sigma > 0.0 || params.wander.amplitude_mv > 0.0) {
    for (std::size_t c = 0; c < kNumLeads; ++c) {
      Rng rng(derive_seed({params.seed, 0x6e6f697365ULL, c}));
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      float* x = samples.data() + c * n;
      for (std::size_t t = 0; t < n; ++t) {
        const double time = static_cast<double>(t) / params.fs;
        double v = x[t];
        if (params.noise_sigma > 0.0) v += params.noise_sigma * rng.normal();
        if (params.wander.amplitude_mv > 0.0) {
          v += params.wander.amplitude_mv *
               std::sin(2.0 * std::numbers::pi * params.wander.frequency_hz * time + phase);
        }
        x[t] = static_cast<float>(v);
      }
    }
  }

  LabeledSample out;
  out.record = EcgRecord(params.fs, n, std::move(samples));
  out.label = params.class_rule.classify(params.heart_rate);
  Rng report_rng(derive_seed({params.seed, 0x7265706f7274ULL}));
  out.report = make_report(out.label, params.heart_rate, report_rng);
  return out;
}

}  // namespace ecglab
