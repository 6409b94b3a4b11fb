#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ecglab/pipeline/optim.hpp"

namespace ecglab {

/// Row-major feature matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Mann-Whitney U / (n_pos * n_neg) with average ranks for ties. Throws
/// UndefinedError unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Mean of one-vs-rest AUCs; scores is (n, n_classes).
double macro_auc(const Matrix& scores, std::span<const std::size_t> labels);

struct ProbeConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double epsilon_smooth = 0.1;
  AdamWConfig optimizer;
  std::size_t n_classes = 3;
};

/// Stratified subsample: round(fraction * n_c) items of every class c,
/// chosen by seed. Throws DataError if any class ends up empty.
std::vector<std::size_t> probe_subsample(std::span<const std::size_t> labels, std::size_t n_classes, double fraction,
                                         std::uint64_t seed);

/// Trains one affine layer on standardized features of the subsample and
/// returns the test macro AUC. Standardization statistics come from all of
/// train_x; the labels are only read for the subsample.
double linear_probe(const Matrix& train_x, std::span<const std::size_t> train_labels, const Matrix& test_x,
                    std::span<const std::size_t> test_labels, double fraction, std::uint64_t seed,
                    const ProbeConfig& config = {});

/// Cosine similarity of every row of a against every row of b.
Matrix cosine_scores(const Matrix& a, const Matrix& b);

}  // namespace ecglab
