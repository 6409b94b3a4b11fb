#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ecglab {

struct GradSuiteEntry {
  std::string name;
  std::string kind;  // "primitive", "loss" or "end-to-end"
  std::size_t instances = 0;
  double max_rel_error = 0.0;      // f64 evaluation
  double max_rel_error_f32 = 0.0;  // same instances in f32, informational
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Central-difference checks of every autodiff primitive and loss on
/// `instances` seeded random inputs (tolerance 1e-3), plus spot checks of the
/// full stage-1 loss against image-encoder parameters (tolerance 1e-2).
std::vector<GradSuiteEntry> run_grad_suite(std::size_t instances = 10, std::uint64_t seed = 0);

}  // namespace ecglab
