#pragma once

#include <cstdint>

#include "ecglab/render/image.hpp"

namespace ecglab {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling ranges of the augmentation families. Each transform fires with
/// probability apply_prob; parameters are drawn uniformly from its range.
struct AugmentConfig {
  Range rotation_deg{-3.0, 3.0};       // within [-3, 3]
  Range gauss_noise_sigma{0.0, 0.05};  // fraction of full scale, within [0, 0.05]
  Range contrast{0.8, 1.2};            // multiplicative, within [0.8, 1.2]
  Range brightness{-0.1, 0.1};         // additive fraction of full scale, within [-0.1, 0.1]
  bool grid_color_jitter = true;
  double apply_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// rotate -> noise -> contrast -> brightness -> grid colour jitter, each gated
/// by apply_prob. Deterministic in (image bytes, aug.seed); size preserved;
/// rotation uses edge-replicate fill. The sampled trace is appended to meta.
EcgImage augment(const EcgImage& image, const AugmentConfig& aug);

}  // namespace ecglab
