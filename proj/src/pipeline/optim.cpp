#include "ecglab/pipeline/optim.hpp"

#include <cmath>
#include <numbers>

#include "ecglab/error.hpp"

namespace ecglab {

double cosine_warmup_lr(std::size_t step, std::size_t total, double warmup_fraction, double lr_max) {
  if (step > total) throw ParameterError("cosine_warmup_lr: step " + std::to_string(step) + " beyond total " + std::to_string(total));
  const auto warmup = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total)));
  if (step < warmup) return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return lr_max;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamWConfig::validate() const {
  if (!(beta1 >= 0 && beta1 < 1)) throw ParameterError("optimizer: beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ParameterError("optimizer: beta2 must be in [0, 1)");
  if (!(eps > 0)) throw ParameterError("optimizer: eps must be > 0");
  if (!(weight_decay >= 0)) throw ParameterError("optimizer: weight_decay must be >= 0");
}

AdamW::AdamW(std::vector<std::pair<std::string, ad::Tensor<float>>> params, AdamWConfig config) : config_(config) {
  config_.validate();
  for (auto& [name, t] : params) {
    const std::size_t n = t.numel();
    const bool decay = t.ndim() >= 2;
    slots_.push_back({std::move(name), std::move(t), std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f), decay});
  }
}

void AdamW::step(double lr) {
  for (const Slot& s : slots_) {
    if (!s.param.has_grad()) continue;
    for (float g : s.param.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("optimizer: non-finite gradient in parameter \"" + s.name + "\"");
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    auto p = s.param.mutable_data();
    const bool has = s.param.has_grad();
    const std::span<const float> g = s.param.grad();
    const double shrink = s.decay ? 1.0 - lr * config_.weight_decay : 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      const double m = b1 * s.m[i] + (1.0 - b1) * gi;
      const double v = b2 * s.v[i] + (1.0 - b2) * gi * gi;
      s.m[i] = static_cast<float>(m);
      s.v[i] = static_cast<float>(v);
      double x = p[i] * shrink;
      x -= lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
      p[i] = static_cast<float>(x);
    }
  }
}

}  // namespace ecglab
