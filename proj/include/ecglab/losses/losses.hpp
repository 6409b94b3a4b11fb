#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "ecglab/ad/ops.hpp"
#include "ecglab/leads/lead_rules.hpp"

namespace ecglab {

struct LossWeights {
  double alpha = 0.1;
  double beta = 1.0;
  double theta = 0.05;
  double w_rule = 0.1;
  double w_e = 0.5;
  double w_g = 0.5;
  double epsilon_smooth = 0.1;
  double det_floor = 1e-12;

  /// Throws ParameterError naming the offending field.
  void validate() const;
};

inline constexpr double kTemperatureInit = 14.29;
inline constexpr double kTemperatureMin = 1.0;
inline constexpr double kTemperatureMax = 100.0;

/// Learnable log-scales for the contrastive and Gram logits; tau = exp(s).
template <typename T>
struct Temperatures {
  ad::Tensor<T> s_ctr;
  ad::Tensor<T> s_gram;

  static Temperatures init(double tau = kTemperatureInit) {
    const T s = static_cast<T>(std::log(tau));
    return {ad::Tensor<T>::parameter({1}, {s}), ad::Tensor<T>::parameter({1}, {s})};
  }
  ad::Tensor<T> tau_ctr() const { return ad::exp(s_ctr); }
  ad::Tensor<T> tau_gram() const { return ad::exp(s_gram); }
  /// Keeps both temperatures inside [kTemperatureMin, kTemperatureMax].
  void clamp() {
    for (auto* s : {&s_ctr, &s_gram}) {
      T& v = s->mutable_data()[0];
      v = std::clamp(v, static_cast<T>(std::log(kTemperatureMin)), static_cast<T>(std::log(kTemperatureMax)));
    }
  }
};

/// Mean over rows of cross-entropy against (1 - eps) I + eps / B, averaged
/// over the row and column directions of a square logit matrix.
template <typename T>
ad::Tensor<T> bidirectional_ce(const ad::Tensor<T>& logits, double eps);

/// Rows are L2-normalized; logits = tau * Z_img Z_txt^T.
template <typename T>
ad::Tensor<T> contrastive_loss(const ad::Tensor<T>& z_img, const ad::Tensor<T>& z_txt, const ad::Tensor<T>& tau,
                               double eps);

/// Entry [i][j] is the Gram volume of (Z_img[i], Z_txt[j], Z_sig[j]) after row
/// normalization: sqrt(max(|det G|, det_floor)).
template <typename T>
ad::Tensor<T> volume_matrix(const ad::Tensor<T>& z_img, const ad::Tensor<T>& z_txt, const ad::Tensor<T>& z_sig,
                            double det_floor = 1e-12);

/// Volume of three vectors of equal length; shape {1}.
template <typename T>
ad::Tensor<T> gram_volume(const ad::Tensor<T>& z_i, const ad::Tensor<T>& z_t, const ad::Tensor<T>& z_s,
                          double det_floor = 1e-12);

/// Bidirectional CE over logits = -tau * V.
template <typename T>
ad::Tensor<T> gram_loss(const ad::Tensor<T>& volumes, const ad::Tensor<T>& tau, double eps);

template <typename T>
ad::Tensor<T> recon_mse(const ad::Tensor<T>& x_hat, const ad::Tensor<T>& x);

/// Differentiable form of rule_loss over (..., 12, T) tensors.
template <typename T>
ad::Tensor<T> rule_loss(const ad::Tensor<T>& x_hat, const ad::Tensor<T>& x, const RuleWeights& w = {});

template <typename T>
struct LossParts {
  ad::Tensor<T> ctr, gram, mse, rule;
};

struct LossBreakdown {
  double l_ctr = 0, l_gram = 0, l_mse = 0, l_rule = 0, total = 0;
};

template <typename T>
struct TotalLoss {
  ad::Tensor<T> total;
  LossBreakdown parts;
};

/// alpha L_ctr + theta L_gram + beta (L_mse + w_rule L_rule). Throws
/// DivergenceError naming the first non-finite part.
template <typename T>
TotalLoss<T> total_loss(const LossParts<T>& parts, const LossWeights& w);

}  // namespace ecglab
