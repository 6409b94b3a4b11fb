#include "ecglab/pipeline/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecglab/ad/ops.hpp"
#include "ecglab/error.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += avg;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedError("auc: needs at least one positive and one negative label");
  const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auc(const Matrix& scores, std::span<const std::size_t> labels) {
  if (scores.rows != labels.size()) throw ShapeError("macro_auc: score rows and labels differ in length");
  double total = 0;
  std::vector<double> s(scores.rows);
  std::vector<std::uint8_t> y(scores.rows);
  for (std::size_t c = 0; c < scores.cols; ++c) {
    for (std::size_t i = 0; i < scores.rows; ++i) {
      s[i] = scores.data[i * scores.cols + c];
      y[i] = labels[i] == c;
    }
    total += auc(s, y);
  }
  return total / static_cast<double>(scores.cols);
}

std::vector<std::size_t> probe_subsample(std::span<const std::size_t> labels, std::size_t n_classes, double fraction,
                                         std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw ParameterError("fraction must be in (0, 1]");
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (k == 0) {
      throw DataError("fraction " + std::to_string(fraction) + " leaves no sample of class " + std::to_string(c));
    }
    Rng rng(derive_seed({seed, 0x70726f6265ULL, c}));
    rng.shuffle(members.begin(), members.end());
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

struct Standardizer {
  std::vector<double> mean, inv_std;

  explicit Standardizer(const Matrix& x) : mean(x.cols, 0.0), inv_std(x.cols, 1.0) {
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) mean[c] += x.data[r * x.cols + c];
    for (auto& m : mean) m /= static_cast<double>(std::max<std::size_t>(x.rows, 1));
    std::vector<double> var(x.cols, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) {
        const double d = x.data[r * x.cols + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double sd = std::sqrt(var[c] / static_cast<double>(std::max<std::size_t>(x.rows, 1)));
      inv_std[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
  }

  std::vector<float> rows(const Matrix& x, std::span<const std::size_t> idx) const {
    std::vector<float> out;
    out.reserve(idx.size() * x.cols);
    for (std::size_t r : idx)
      for (std::size_t c = 0; c < x.cols; ++c)
        out.push_back(static_cast<float>((x.data[r * x.cols + c] - mean[c]) * inv_std[c]));
    return out;
  }
};

}  // namespace

double linear_probe(const Matrix& train_x, std::span<const std::size_t> train_labels, const Matrix& test_x,
                    std::span<const std::size_t> test_labels, double fraction, std::uint64_t seed,
                    const ProbeConfig& config) {
  using Tf = ad::Tensor<float>;
  if (train_x.rows != train_labels.size() || test_x.rows != test_labels.size() || train_x.cols != test_x.cols) {
    throw ShapeError("linear_probe: feature and label shapes disagree");
  }
  if (config.batch_size == 0) throw ParameterError("probe batch_size must be >= 1");
  const std::size_t d = train_x.cols, C = config.n_classes;
  std::vector<std::size_t> subset = probe_subsample(train_labels, C, fraction, seed);
  const Standardizer stdz(train_x);

  // Zero init: the probe objective is convex, and random init would swamp short runs.
  Tf W = Tf::parameter({d, C}, std::vector<float>(d * C, 0.0f));
  Tf b = Tf::parameter({C}, std::vector<float>(C, 0.0f));
  AdamW opt({{"probe/w", W}, {"probe/b", b}}, config.optimizer);

  const double eps = config.epsilon_smooth;
  Rng order(derive_seed({seed, 0x6f72646572ULL}));
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order.shuffle(subset.begin(), subset.end());
    for (std::size_t start = 0; start < subset.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, subset.size() - start);
      std::span<const std::size_t> idx(subset.data() + start, n);
      std::vector<float> target(n * C, static_cast<float>(eps / static_cast<double>(C)));
      for (std::size_t i = 0; i < n; ++i) target[i * C + train_labels[idx[i]]] += static_cast<float>(1.0 - eps);
      Tf x = Tf::constant({n, d}, stdz.rows(train_x, idx));
      Tf logp = ad::log_softmax_rows(ad::add(ad::matmul(x, W), b));
      Tf loss = ad::scale(ad::sum_all(ad::mul(logp, Tf::constant({n, C}, std::move(target)))),
                          -1.0f / static_cast<float>(n));
      W.zero_grad();
      b.zero_grad();
      ad::backward(loss);
      opt.step(config.lr);
    }
  }

  std::vector<std::size_t> all(test_x.rows);
  std::iota(all.begin(), all.end(), 0);
  Tf logits = ad::add(ad::matmul(Tf::constant({test_x.rows, d}, stdz.rows(test_x, all)), W.detach()), b.detach());
  Matrix scores{test_x.rows, C, std::vector<float>(logits.data().begin(), logits.data().end())};
  return macro_auc(scores, test_labels);
}

Matrix cosine_scores(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("cosine_scores: embedding widths differ");
  auto norm = [](std::span<const float> v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
  };
  Matrix out{a.rows, b.rows, std::vector<float>(a.rows * b.rows)};
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double na = norm(a.row(i));
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double nb = norm(b.row(j));
      if (na == 0 || nb == 0) throw DomainError("cosine_scores: zero-norm embedding");
      double dot = 0;
      for (std::size_t k = 0; k < a.cols; ++k) dot += static_cast<double>(a.data[i * a.cols + k]) * b.data[j * b.cols + k];
      out.data[i * b.rows + j] = static_cast<float>(dot / (na * nb));
    }
  }
  return out;
}

}  // namespace ecglab
