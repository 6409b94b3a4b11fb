#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecglab/render/augment.hpp"
#include "ecglab/signal/synth.hpp"

namespace ecglab {

/// Ranges the generator draws per-record parameters from.
struct SynthRanges {
  double fs = 100.0;
  double duration = 10.0;
  // Heart-rate range per class; kept clear of the class thresholds.
  std::array<Range, kNumRhythmClasses> heart_rate{{{40.0, 57.0}, {63.0, 97.0}, {103.0, 150.0}}};
  double amplitude_jitter = 0.2;  // relative, per wave
  double noise_sigma_max = 0.02;  // mV
  double wander_max_mv = 0.1;
  Range wander_hz{0.1, 0.5};

  void validate() const;
};

struct DatasetConfig {
  std::size_t n_samples = 600;  // split into train and val
  std::size_t n_test = 120;     // held out for downstream evaluation
  double split_ratio = 0.9;     // train share of n_samples
  std::array<double, kNumRhythmClasses> class_mix{1.0 / 3, 1.0 / 3, 1.0 / 3};
  SynthRanges synth;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split split);

struct DatasetItem {
  std::string id;
  Split split = Split::kTrain;
  double heart_rate = 0.0;
  LabeledSample sample;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::vector<std::size_t> train, val, test;  // indices into items
  std::uint64_t seed = 0;
};

/// Class counts follow class_mix by largest-remainder rounding, so n=600 at
/// equal mix gives exactly 200 per class. Deterministic in config.
Dataset build_dataset(const DatasetConfig& config);

/// Writes records/<id>.ecgr and manifest.json under `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Reads a manifest written by save_dataset; record paths are relative to it.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace ecglab
