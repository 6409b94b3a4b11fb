#include "ecglab/losses/losses.hpp"

#include "ecglab/error.hpp"

namespace ecglab {

using ad::Tensor;

void LossWeights::validate() const {
  const std::pair<const char*, double> fields[] = {{"alpha", alpha}, {"beta", beta},   {"theta", theta},
                                                   {"w_rule", w_rule}, {"w_e", w_e},   {"w_g", w_g},
                                                   {"det_floor", det_floor}};
  for (const auto& [name, v] : fields) {
    if (!std::isfinite(v) || v < 0) throw ParameterError(std::string("loss weights: ") + name + " must be >= 0");
  }
  if (!(epsilon_smooth >= 0 && epsilon_smooth < 1)) throw ParameterError("loss weights: epsilon_smooth must be in [0, 1)");
}

namespace {

template <typename T>
void require_square(const char* op, const Tensor<T>& m) {
  if (m.ndim() != 2 || m.dim(0) != m.dim(1)) throw ShapeError(std::string(op) + ": expected a B x B matrix, got " + ad::to_string(m.shape()));
}

template <typename T>
void require_pair(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": embedding shapes " + ad::to_string(a.shape()) + " and " + ad::to_string(b.shape()) +
                     " differ");
  }
}

template <typename T>
Tensor<T> smoothed_targets(std::size_t b, double eps) {
  std::vector<T> y(b * b, static_cast<T>(eps / static_cast<double>(b)));
  for (std::size_t i = 0; i < b; ++i) y[i * b + i] += static_cast<T>(1.0 - eps);
  return Tensor<T>::constant({b, b}, std::move(y));
}

template <typename T>
Tensor<T> row_ce(const Tensor<T>& logits, const Tensor<T>& targets) {
  const T rows = static_cast<T>(logits.dim(0));
  return ad::scale(ad::sum_all(ad::mul(targets, ad::log_softmax_rows(logits))), T{-1} / rows);
}

// (B) -> (B, B) with entry [i][j] = v[i].
template <typename T>
Tensor<T> repeat_columns(const Tensor<T>& v) {
  const std::size_t b = v.numel();
  return ad::matmul(ad::reshape(v, {b, 1}), Tensor<T>::full({1, b}, T{1}));
}

// (B) -> (B, B) with entry [i][j] = v[j].
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& v) {
  const std::size_t b = v.numel();
  return ad::mul(Tensor<T>::full({b, b}, T{1}), v);
}

template <typename T>
Tensor<T> row_dot(const Tensor<T>& a, const Tensor<T>& b) {
  return ad::sum_axis(ad::mul(a, b), 1);
}

}  // namespace

template <typename T>
Tensor<T> bidirectional_ce(const Tensor<T>& logits, double eps) {
  require_square("bidirectional_ce", logits);
  const Tensor<T> y = smoothed_targets<T>(logits.dim(0), eps);
  return ad::scale(ad::add(row_ce(logits, y), row_ce(ad::transpose(logits), y)), T{0.5});
}

template <typename T>
Tensor<T> contrastive_loss(const Tensor<T>& z_img, const Tensor<T>& z_txt, const Tensor<T>& tau, double eps) {
  require_pair("contrastive_loss", z_img, z_txt);
  const Tensor<T> sim = ad::matmul(ad::l2_normalize_rows(z_img), ad::transpose(ad::l2_normalize_rows(z_txt)));
  return bidirectional_ce(ad::mul(sim, tau), eps);
}

template <typename T>
Tensor<T> volume_matrix(const Tensor<T>& z_img, const Tensor<T>& z_txt, const Tensor<T>& z_sig, double det_floor) {
  require_pair("volume_matrix", z_img, z_txt);
  require_pair("volume_matrix", z_img, z_sig);
  const std::size_t b = z_img.dim(0);
  const Tensor<T> a = ad::l2_normalize_rows(z_img);
  const Tensor<T> t = ad::l2_normalize_rows(z_txt);
  const Tensor<T> s = ad::l2_normalize_rows(z_sig);

  const Tensor<T> aa = repeat_columns(row_dot(a, a));
  const Tensor<T> tt = repeat_rows(row_dot(t, t));
  const Tensor<T> ss = repeat_rows(row_dot(s, s));
  const Tensor<T> at = ad::matmul(a, ad::transpose(t));
  const Tensor<T> as = ad::matmul(a, ad::transpose(s));
  const Tensor<T> ts = repeat_rows(row_dot(t, s));

  std::vector<Tensor<T>> entries;
  for (const Tensor<T>* e : {&aa, &at, &as, &at, &tt, &ts, &as, &ts, &ss}) entries.push_back(ad::reshape(*e, {b, b, 1}));
  const Tensor<T> gram = ad::reshape(ad::concat(entries, 2), {b, b, 3, 3});
  const Tensor<T> det = ad::reshape(ad::det3(gram), {b, b});
  return ad::sqrt(ad::clamp_min(ad::abs(det), static_cast<T>(det_floor)));
}

template <typename T>
Tensor<T> gram_volume(const Tensor<T>& z_i, const Tensor<T>& z_t, const Tensor<T>& z_s, double det_floor) {
  if (z_i.shape() != z_t.shape() || z_i.shape() != z_s.shape()) {
    throw ShapeError("gram_volume: vector shapes " + ad::to_string(z_i.shape()) + ", " + ad::to_string(z_t.shape()) + ", " +
                     ad::to_string(z_s.shape()) + " differ");
  }
  const std::size_t d = z_i.numel();
  const Tensor<T> v = volume_matrix(ad::reshape(z_i, {1, d}), ad::reshape(z_t, {1, d}), ad::reshape(z_s, {1, d}), det_floor);
  return ad::reshape(v, {1});
}

template <typename T>
Tensor<T> gram_loss(const Tensor<T>& volumes, const Tensor<T>& tau, double eps) {
  require_square("gram_loss", volumes);
  return bidirectional_ce(ad::mul(volumes, ad::scale(tau, T{-1})), eps);
}

template <typename T>
Tensor<T> recon_mse(const Tensor<T>& x_hat, const Tensor<T>& x) {
  if (x_hat.shape() != x.shape()) {
    throw ShapeError("recon_mse: shapes " + ad::to_string(x_hat.shape()) + " and " + ad::to_string(x.shape()) + " differ");
  }
  const Tensor<T> d = ad::sub(x_hat, x);
  return ad::mean_all(ad::mul(d, d));
}

template <typename T>
Tensor<T> rule_loss(const Tensor<T>& x_hat, const Tensor<T>& x, const RuleWeights& w) {
  w.validate();
  if (x_hat.shape() != x.shape() || x.ndim() < 2 || x.shape()[x.ndim() - 2] != kNumLeads) {
    throw ShapeError("rule_loss: expected matching (..., 12, T) shapes, got " + ad::to_string(x_hat.shape()) + " and " +
                     ad::to_string(x.shape()));
  }
  const std::size_t ax = x.ndim() - 2;
  const auto lead = [&](std::size_t i) { return ad::slice(x_hat, ax, i, 1); };
  const Tensor<T> i_hat = lead(0), ii_hat = lead(1), iii_hat = lead(2);
  const T third = T{1} / T{3};
  const Tensor<T> i_ref = ad::scale(ad::sub(ad::add(ad::scale(i_hat, T{2}), ii_hat), iii_hat), third);
  const Tensor<T> iii_ref = ad::scale(ad::add(ad::sub(ii_hat, i_hat), ad::scale(iii_hat, T{2})), third);
  const Tensor<T> ii_ref = ad::add(i_ref, iii_ref);
  const Tensor<T> avr = ad::scale(ad::add(i_ref, ii_ref), T{-0.5});
  const Tensor<T> avl = ad::sub(i_ref, ad::scale(ii_ref, T{0.5}));
  const Tensor<T> avf = ad::sub(ii_ref, ad::scale(i_ref, T{0.5}));

  const Tensor<T> e = recon_mse(ad::concat<T>({i_ref, ii_ref, iii_ref}, ax), ad::slice(x, ax, 0, 3));
  const Tensor<T> g = recon_mse(ad::concat<T>({avr, avl, avf}, ax), ad::slice(x, ax, 3, 3));
  return ad::add(ad::scale(e, static_cast<T>(w.w_e)), ad::scale(g, static_cast<T>(w.w_g)));
}

template <typename T>
TotalLoss<T> total_loss(const LossParts<T>& parts, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, const Tensor<T>*> named[] = {
      {"l_ctr", &parts.ctr}, {"l_gram", &parts.gram}, {"l_mse", &parts.mse}, {"l_rule", &parts.rule}};
  LossBreakdown b;
  double* slots[] = {&b.l_ctr, &b.l_gram, &b.l_mse, &b.l_rule};
  for (std::size_t k = 0; k < 4; ++k) {
    const double v = static_cast<double>(named[k].second->item());
    if (!std::isfinite(v)) throw DivergenceError(std::string("total_loss: ") + named[k].first + " is not finite");
    *slots[k] = v;
  }
  const Tensor<T> recon = ad::add(parts.mse, ad::scale(parts.rule, static_cast<T>(w.w_rule)));
  Tensor<T> total = ad::add(ad::add(ad::scale(parts.ctr, static_cast<T>(w.alpha)), ad::scale(parts.gram, static_cast<T>(w.theta))),
                            ad::scale(recon, static_cast<T>(w.beta)));
  b.total = static_cast<double>(total.item());
  if (!std::isfinite(b.total)) throw DivergenceError("total_loss: total is not finite");
  return {std::move(total), b};
}

#define ECGLAB_INSTANTIATE(T)                                                                                  \
  template Tensor<T> bidirectional_ce(const Tensor<T>&, double);                                               \
  template Tensor<T> contrastive_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);          \
  template Tensor<T> volume_matrix(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);             \
  template Tensor<T> gram_volume(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);               \
  template Tensor<T> gram_loss(const Tensor<T>&, const Tensor<T>&, double);                                   \
  template Tensor<T> recon_mse(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> rule_loss(const Tensor<T>&, const Tensor<T>&, const RuleWeights&);                       \
  template TotalLoss<T> total_loss(const LossParts<T>&, const LossWeights&);

ECGLAB_INSTANTIATE(float)
ECGLAB_INSTANTIATE(double)

#undef ECGLAB_INSTANTIATE

}  // namespace ecglab
