#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ecglab/ad/tensor.hpp"
#include "ecglab/error.hpp"

namespace ecglab::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

template <typename T>
using ScalarFn = std::function<Tensor<T>(const std::vector<Tensor<T>>&)>;

/// Compares backward() against central differences at every coordinate of
/// every input. Inputs are rebuilt as fresh parameters so the caller's tensors
/// are left untouched. With `extrapolate`, the differences at h and h/2 are
/// combined (Richardson) so the truncation error drops from O(h^2) to O(h^4);
/// this matters for coordinates whose true gradient is near zero.
template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& f, const std::vector<Tensor<T>>& inputs, T h, bool extrapolate = false) {
  std::vector<Tensor<T>> params;
  params.reserve(inputs.size());
  for (const auto& x : inputs) params.push_back(Tensor<T>::parameter(x.shape(), std::vector<T>(x.data().begin(), x.data().end())));

  const Tensor<T> out = f(params);
  if (out.numel() != 1) throw ContractError("grad_check: function output has shape " + to_string(out.shape()) + ", expected a scalar");
  backward(out);

  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<T> analytic = params[k].has_grad() ? std::vector<T>(params[k].grad().begin(), params[k].grad().end())
                                                   : std::vector<T>(params[k].numel(), T{0});
    auto vals = params[k].mutable_data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      auto central = [&](T step) {
        vals[i] = orig + step;
        const double fp = static_cast<double>(f(params).item());
        vals[i] = orig - step;
        const double fm = static_cast<double>(f(params).item());
        vals[i] = orig;
        return (fp - fm) / (static_cast<double>(orig + step) - static_cast<double>(orig - step));
      };
      const double coarse = central(h);
      const double numeric = extrapolate ? (4.0 * central(h / 2) - coarse) / 3.0 : coarse;
      const double err = relative_error(static_cast<double>(analytic[i]), numeric);
      ++res.coordinates;
      if (err > res.max_rel_error || res.coordinates == 1) {
        res.max_rel_error = err;
        res.worst_input = k;
        res.worst_index = i;
        res.analytic = static_cast<double>(analytic[i]);
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace ecglab::ad
