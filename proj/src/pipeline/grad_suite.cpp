#include "ecglab/pipeline/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ecglab/ad/grad_check.hpp"
#include "ecglab/losses/losses.hpp"
#include "ecglab/models/models.hpp"
#include "ecglab/hash.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

namespace {

using ad::Shape;
using ad::Tensor;

template <typename T>
Tensor<T> random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::constant(std::move(shape), std::move(v));
}

/// Values in +-[0.2, 1]: keeps relu, abs and clamp_min away from their kinks.
template <typename T>
Tensor<T> off_kink(Shape shape, Rng& rng) {
  std::vector<T> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<T>((rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.2, 1.0));
  return Tensor<T>::constant(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& y, std::uint64_t seed) {
  // Independent of the input stream: weights equal to the inputs would make
  // some gradients vanish identically (e.g. l2 normalization).
  Rng rng(derive_seed({seed, 0x77656967ULL}));
  std::vector<T> w(y.numel());
  for (auto& x : w) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return ad::sum_all(ad::mul(y, Tensor<T>::constant(y.shape(), std::move(w))));
}

template <typename T>
struct Case {
  ad::ScalarFn<T> f;
  std::vector<Tensor<T>> inputs;
};

template <typename T>
using Builder = std::function<Case<T>(std::uint64_t seed)>;

struct Named {
  std::string name, kind;
  Builder<double> f64;
  Builder<float> f32;
};

/// Registers a builder for both scalar types. F is a generic lambda
/// (auto tag, seed) -> Case<decltype(tag)>.
template <typename F>
Named both(std::string name, std::string kind, F make) {
  return {std::move(name), std::move(kind), [make](std::uint64_t s) { return make(double{}, s); },
          [make](std::uint64_t s) { return make(float{}, s); }};
}

template <typename T, typename Op>
Case<T> unary_case(std::uint64_t seed, Tensor<T> x, Op op) {
  return {[seed, op](const std::vector<Tensor<T>>& in) { return weighted_sum(op(in[0]), seed); }, {std::move(x)}};
}

template <typename T, typename Op>
Case<T> binary_case(std::uint64_t seed, Tensor<T> a, Tensor<T> b, Op op) {
  return {[seed, op](const std::vector<Tensor<T>>& in) { return weighted_sum(op(in[0], in[1]), seed); },
          {std::move(a), std::move(b)}};
}

std::vector<Named> primitive_cases() {
  std::vector<Named> out;
  out.push_back(both("add", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return binary_case<T>(s, random<T>({3, 4}, r), random<T>({4}, r), [](auto a, auto b) { return ad::add(a, b); });
  }));
  out.push_back(both("sub", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return binary_case<T>(s, random<T>({3, 4}, r), random<T>({3, 4}, r), [](auto a, auto b) { return ad::sub(a, b); });
  }));
  out.push_back(both("mul", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return binary_case<T>(s, random<T>({2, 3, 4}, r), random<T>({1}, r), [](auto a, auto b) { return ad::mul(a, b); });
  }));
  out.push_back(both("scale", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({5}, r), [](auto x) { return ad::scale(x, T(-1.7)); });
  }));
  out.push_back(both("add_scalar", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({5}, r), [](auto x) { return ad::add_scalar(x, T(0.3)); });
  }));
  out.push_back(both("matmul", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return binary_case<T>(s, random<T>({3, 4}, r), random<T>({4, 2}, r), [](auto a, auto b) { return ad::matmul(a, b); });
  }));
  out.push_back(both("matmul_batched", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return binary_case<T>(s, random<T>({2, 3, 4}, r), random<T>({2, 4, 3}, r), [](auto a, auto b) { return ad::matmul(a, b); });
  }));
  out.push_back(both("transpose", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({2, 3, 4}, r), [](auto x) { return ad::transpose(x); });
  }));
  out.push_back(both("tanh", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({6}, r, -2, 2), [](auto x) { return ad::tanh(x); });
  }));
  out.push_back(both("exp", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({6}, r), [](auto x) { return ad::exp(x); });
  }));
  out.push_back(both("log", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({6}, r, 0.2, 2.0), [](auto x) { return ad::log(x); });
  }));
  out.push_back(both("sqrt", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({6}, r, 0.2, 2.0), [](auto x) { return ad::sqrt(x); });
  }));
  out.push_back(both("relu", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, off_kink<T>({8}, r), [](auto x) { return ad::relu(x); });
  }));
  out.push_back(both("abs", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, off_kink<T>({8}, r), [](auto x) { return ad::abs(x); });
  }));
  out.push_back(both("clamp_min", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, off_kink<T>({8}, r), [](auto x) { return ad::clamp_min(x, T(0)); });
  }));
  out.push_back(both("sum_axis", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({2, 3, 4}, r), [](auto x) { return ad::sum_axis(x, 1); });
  }));
  out.push_back(both("mean_axis", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({2, 3, 4}, r), [](auto x) { return ad::mean_axis(x, 2); });
  }));
  out.push_back(both("sum_all", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 4}, r), [](auto x) { return ad::sum_all(ad::mul(x, x)); });
  }));
  out.push_back(both("mean_all", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 4}, r), [](auto x) { return ad::mean_all(ad::mul(x, x)); });
  }));
  out.push_back(both("concat", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return binary_case<T>(s, random<T>({2, 3}, r), random<T>({2, 2}, r), [](auto a, auto b) { return ad::concat<T>({a, b}, 1); });
  }));
  out.push_back(both("slice", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 5}, r), [](auto x) { return ad::slice(x, 1, 1, 3); });
  }));
  out.push_back(both("reshape", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({2, 6}, r), [](auto x) { return ad::reshape(x, {3, 4}); });
  }));
  out.push_back(both("l2_normalize_rows", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 4}, r), [](auto x) { return ad::l2_normalize_rows(x); });
  }));
  out.push_back(both("softmax_rows", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 4}, r, -2, 2), [](auto x) { return ad::softmax_rows(x); });
  }));
  out.push_back(both("log_softmax_rows", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 4}, r, -2, 2), [](auto x) { return ad::log_softmax_rows(x); });
  }));
  out.push_back(both("layer_norm_rows", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({3, 5}, r, -2, 2), [](auto x) { return ad::layer_norm_rows(x); });
  }));
  out.push_back(both("det3", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({2, 3, 3}, r), [](auto x) { return ad::det3(x); });
  }));
  out.push_back(both("scaled_dot_attention", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    auto q = random<T>({2, 3, 4}, r), k = random<T>({2, 3, 4}, r), v = random<T>({2, 3, 4}, r);
    return Case<T>{[s](const std::vector<Tensor<T>>& in) { return weighted_sum(ad::scaled_dot_attention(in[0], in[1], in[2]), s); },
                   {q, k, v}};
  }));
  out.push_back(both("gather_rows", "primitive", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return unary_case<T>(s, random<T>({5, 3}, r), [](auto x) { return ad::gather_rows(x, {4, 0, 4, 2}); });
  }));
  return out;
}

std::vector<Named> loss_cases() {
  std::vector<Named> out;
  out.push_back(both("contrastive_loss", "loss", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return Case<T>{[](const std::vector<Tensor<T>>& in) { return contrastive_loss(in[0], in[1], in[2], 0.1); },
                   {random<T>({4, 5}, r), random<T>({4, 5}, r), Tensor<T>::constant({1}, {T(3)})}};
  }));
  out.push_back(both("gram_loss", "loss", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return Case<T>{[](const std::vector<Tensor<T>>& in) {
                     return gram_loss(volume_matrix(in[0], in[1], in[2]), in[3], 0.1);
                   },
                   {random<T>({3, 4}, r), random<T>({3, 4}, r), random<T>({3, 4}, r), Tensor<T>::constant({1}, {T(2)})}};
  }));
  out.push_back(both("recon_mse", "loss", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return Case<T>{[](const std::vector<Tensor<T>>& in) { return recon_mse(in[0], in[1]); },
                   {random<T>({2, 12, 6}, r), random<T>({2, 12, 6}, r)}};
  }));
  out.push_back(both("rule_loss", "loss", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return Case<T>{[](const std::vector<Tensor<T>>& in) { return rule_loss(in[0], in[1]); },
                   {random<T>({2, 12, 6}, r), random<T>({2, 12, 6}, r)}};
  }));
  out.push_back(both("total_loss", "loss", [](auto t, std::uint64_t s) {
    using T = decltype(t);
    Rng r(s);
    return Case<T>{[](const std::vector<Tensor<T>>& in) {
                     LossParts<T> p;
                     p.ctr = contrastive_loss(in[0], in[1], in[4], 0.1);
                     p.gram = gram_loss(volume_matrix(in[0], in[1], in[2]), in[4], 0.1);
                     p.mse = recon_mse(in[3], in[5]);
                     p.rule = rule_loss(in[3], in[5]);
                     return total_loss(p, LossWeights{}).total;
                   },
                   {random<T>({3, 4}, r), random<T>({3, 4}, r), random<T>({3, 4}, r), random<T>({3, 12, 4}, r),
                    Tensor<T>::constant({1}, {T(2)}), random<T>({3, 12, 4}, r)}};
  }));
  return out;
}

/// Finite-difference step; in f64 the differences are also extrapolated.
template <typename T>
T step_for() {
  return std::is_same_v<T, double> ? T(1e-4) : T(1e-2);
}

template <typename T>
double run_case(const Builder<T>& build, std::uint64_t seed) {
  Case<T> c = build(seed);
  return ad::grad_check<T>(c.f, c.inputs, step_for<T>(), std::is_same_v<T, double>).max_rel_error;
}

ModelConfig tiny_model(std::uint64_t seed) {
  ModelConfig m;
  m.d_img = 6;
  m.d_sig = 5;
  m.decoder = {1, 8, 2, 4, 0.25};
  m.n_samples = 16;
  m.image_width = 32;
  m.image_height = 32;
  m.grid_rows = 16;
  m.grid_cols = 16;
  m.image_patch = 8;
  m.image_hidden = 6;
  m.signal_patch = 4;
  m.signal_hidden = 6;
  m.text_dim = 6;
  m.seed = seed;
  return m;
}

/// Full stage-1 loss of a tiny model; returns the worst relative error over
/// spot-checked coordinates of every image-encoder and projection tensor.
template <typename T>
double end_to_end(std::uint64_t seed, T h) {
  const ModelConfig cfg = tiny_model(seed);
  AlignmentModel<T> model(cfg);
  Rng rng(derive_seed({seed, 0x65326555ULL}));
  const std::size_t b = 3;
  const auto patches = random<T>({b, cfg.n_image_patches(), cfg.image_patch * cfg.image_patch}, rng, 0.0, 1.0);
  const auto target = random<T>({b, kNumLeads, cfg.n_samples}, rng);
  const auto z_sig = random<T>({b, cfg.d_sig}, rng);
  const auto z_txt = random<T>({b, cfg.d_sig}, rng);
  const auto temps = Temperatures<T>::init(3.0);
  const std::vector<std::uint64_t> masks = {1, 2, 3};
  auto loss = [&] {
    const auto z = model.encode_image_patches(patches);
    const auto p = model.project(z);
    LossParts<T> parts;
    parts.ctr = contrastive_loss(p.z_ctr, z_txt, temps.tau_ctr(), 0.1);
    parts.gram = gram_loss(volume_matrix(p.z_ctr, z_txt, z_sig), temps.tau_gram(), 0.1);
    const auto x_hat = model.decode(p.z_rec, masks, true);
    parts.mse = recon_mse(x_hat, target);
    parts.rule = rule_loss(x_hat, target);
    return total_loss(parts, LossWeights{}).total;
  };
  model.student().zero_grad();
  ad::backward(loss());
  double worst = 0;
  for (auto& [name, param] : model.student().all()) {
    if (name.rfind("image/", 0) != 0 && name.rfind("proj_", 0) != 0) continue;
    const std::vector<T> grad(param.grad().begin(), param.grad().end());
    auto v = param.mutable_data();
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = rng.below(v.size());
      const T orig = v[i];
      v[i] = orig + h;
      const double fp = loss().item();
      v[i] = orig - h;
      const double fm = loss().item();
      v[i] = orig;
      worst = std::max(worst, ad::relative_error(grad[i], (fp - fm) / (2.0 * static_cast<double>(h))));
    }
  }
  return worst;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::size_t instances, std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  std::vector<Named> cases = primitive_cases();
  for (auto& c : loss_cases()) cases.push_back(std::move(c));
  for (const Named& c : cases) {
    GradSuiteEntry e{c.name, c.kind, instances, 0.0, 0.0, 1e-3};
    for (std::size_t k = 0; k < instances; ++k) {
      const std::uint64_t s = derive_seed({seed, fnv1a64(c.name), k});
      e.max_rel_error = std::max(e.max_rel_error, run_case(c.f64, s));
      e.max_rel_error_f32 = std::max(e.max_rel_error_f32, run_case(c.f32, s));
    }
    out.push_back(std::move(e));
  }
  GradSuiteEntry e2e{"image_encoder_end_to_end", "end-to-end", instances, 0.0, 0.0, 1e-2};
  for (std::size_t k = 0; k < instances; ++k) {
    const std::uint64_t s = derive_seed({seed, 0xe2e, k});
    e2e.max_rel_error = std::max(e2e.max_rel_error, end_to_end<double>(s, 1e-6));
    e2e.max_rel_error_f32 = std::max(e2e.max_rel_error_f32, end_to_end<float>(s, 1e-2f));
  }
  out.push_back(e2e);
  return out;
}

}  // namespace ecglab
