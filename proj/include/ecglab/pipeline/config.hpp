#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ecglab/losses/losses.hpp"
#include "ecglab/models/models.hpp"
#include "ecglab/pipeline/dataset.hpp"
#include "ecglab/pipeline/eval.hpp"
#include "ecglab/pipeline/optim.hpp"
#include "ecglab/render/augment.hpp"
#include "ecglab/render/render.hpp"

namespace ecglab {

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::size_t total_steps = 1000;
  double warmup_fraction = 0.10;
  std::size_t eval_interval = 50;
  AdamWConfig optimizer;
  // Stage 0: contrastive pretraining of the signal and text teachers.
  std::size_t teacher_steps = 500;
  std::size_t teacher_batch_size = 32;
  double teacher_lr = 1e-3;

  void validate() const;
  /// Batch 80, lr 5e-4, 50000 steps.
  static TrainConfig paper_scale();
};

struct PathsConfig {
  std::string out = "runs/default";
  std::string data;        // manifest.json; empty builds the dataset in memory
  std::string checkpoint;  // for eval and inspect-checkpoint
};

/// Everything a run depends on. `seed` drives the dataset, parameter init,
/// batch sampling and per-sample augmentation.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig data;
  TrainConfig train;
  LossWeights loss;
  ModelConfig model;
  RenderConfig render;
  AugmentConfig augment;
  ProbeConfig probe;
  PathsConfig paths;

  ExperimentConfig();
  /// Propagates the seed and the render size into the sub-configs, then
  /// validates all of them.
  void resolve();
};

nlohmann::ordered_json to_json(const ExperimentConfig& config);
/// Keys absent from `j` keep their defaults; unknown keys throw
/// ParameterError naming the dotted path. The result is resolved.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON of everything except `paths`.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace ecglab
