#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ecglab/pipeline/checkpoint.hpp"
#include "ecglab/pipeline/config.hpp"
#include "ecglab/pipeline/dataset.hpp"
#include "ecglab/pipeline/eval.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

using LogSink = std::function<void(const std::string& json_line)>;

struct TrainOptions {
  std::size_t workers = 1;  // render fan-out only
  LogSink on_log;           // one call per loss-log line, in step order
  LogSink on_teacher_log;
};

struct EvalPoint {
  std::size_t step = 0;
  float val_loss = 0.0f;
};

struct TrainResult {
  Checkpoint best;
  std::vector<LossBreakdown> steps;  // steps[s - 1] is step s
  std::vector<EvalPoint> evals;
  std::vector<std::string> log;       // JSON lines, step and eval records
  std::vector<double> teacher_losses;
};

/// Seed of dataset item `index` at training step `step`.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t step, std::size_t index) {
  return derive_seed({seed, step, index});
}

/// Stage 0: symmetric contrastive training of the signal and text teachers
/// on train-split (record, report) pairs, then freeze. Returns the per-step loss.
std::vector<double> pretrain_teachers(AlignmentModel<float>& model, const Dataset& data, const ExperimentConfig& config,
                                      const LogSink& on_log = {});

/// Stage 1. Runs stage 0 first when the teachers are not frozen yet. Leaves
/// `model` at its final-step parameters; the lowest-val-loss state is in best.
TrainResult train(const ExperimentConfig& config, const Dataset& data, AlignmentModel<float>& model,
                  const TrainOptions& options = {});

/// Clean (unaugmented) render of one item at the configured size.
EcgImage render_item(const DatasetItem& item, const RenderConfig& render);

struct Embeddings {
  Matrix z_img, z_ctr, z_rec;
  std::vector<std::size_t> labels;
};

/// Image embeddings of clean renders of `indices`.
Embeddings embed_items(const AlignmentModel<float>& model, const Dataset& data, const std::vector<std::size_t>& indices,
                       const ExperimentConfig& config, std::size_t workers = 1);

/// Zero-shot macro AUC: cosine(z_ctr, z_txt(prompt_c)) over the test split.
double zero_shot_auc(const AlignmentModel<float>& model, const Embeddings& test, const std::vector<ReportText>& prompts);

/// Mean Einthoven residual RMS of unmasked decoder reconstructions.
double decoded_residual_rms(const AlignmentModel<float>& model, const Embeddings& items, double fs);

}  // namespace ecglab
