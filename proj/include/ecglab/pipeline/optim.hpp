#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ecglab/ad/tensor.hpp"

namespace ecglab {

/// Linear ramp 0 -> lr_max over the first floor(warmup_fraction * total)
/// steps, then lr_max * (1 + cos(pi * progress)) / 2 down to 0 at `total`.
double cosine_warmup_lr(std::size_t step, std::size_t total, double warmup_fraction, double lr_max);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

/// AdamW over a fixed list of named parameters. Weight decay is applied only
/// to tensors with two or more axes (weight matrices, embedding tables).
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, ad::Tensor<float>>> params, AdamWConfig config);

  /// One update with the gradients currently stored on the parameters.
  /// Throws DivergenceError naming the first parameter with a non-finite grad.
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::string name;
    ad::Tensor<float> param;
    std::vector<float> m, v;
    bool decay;
  };
  std::vector<Slot> slots_;
  AdamWConfig config_;
  std::size_t t_ = 0;
};

}  // namespace ecglab
