#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecglab/ad/ops.hpp"
#include "ecglab/render/image.hpp"
#include "ecglab/signal/record.hpp"
#include "ecglab/signal/report.hpp"

namespace ecglab {

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t patch = 8;
  double mask_ratio = 0.25;
};

struct ModelConfig {
  std::size_t d_img = 64;
  std::size_t d_sig = 32;
  DecoderConfig decoder;
  std::size_t n_samples = 1000;  // T of decoded records
  // Render size the image encoder accepts.
  int image_width = 1080;
  int image_height = 560;
  std::size_t grid_rows = 128;
  std::size_t grid_cols = 160;
  std::size_t image_patch = 16;
  std::size_t image_hidden = 128;
  std::size_t signal_patch = 20;
  std::size_t signal_hidden = 64;
  std::size_t text_dim = 32;
  // Right-pad T to a multiple of the decoder patch; otherwise P must divide T.
  bool pad_to_patch = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t n_queries() const { return (n_samples + decoder.patch - 1) / decoder.patch; }
  std::size_t n_image_patches() const { return (grid_rows / image_patch) * (grid_cols / image_patch); }

  /// Dimensions of the full-size architecture (12 layers, d = 768, 500 Hz).
  static ModelConfig paper_scale();
};

/// Named trainable tensors in a stable (lexicographic) order.
template <typename T>
class ParameterRegistry {
 public:
  ad::Tensor<T>& add(const std::string& name, ad::Shape shape, std::vector<T> values);
  const ad::Tensor<T>& get(const std::string& name) const;  // throws LookupError
  ad::Tensor<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t numel() const;

  const std::map<std::string, ad::Tensor<T>>& all() const { return params_; }
  std::map<std::string, ad::Tensor<T>>& all() { return params_; }

  void zero_grad();
  /// Stops gradient flow into every tensor of the registry.
  void freeze();
  /// FNV-1a over names, shapes and value bytes.
  std::uint64_t checksum() const;

 private:
  std::map<std::string, ad::Tensor<T>> params_;
};

/// Grayscale area-downsample to grid_rows x grid_cols, inverted so ink is
/// near 1, and laid out patch-major: (n_image_patches, image_patch^2).
std::vector<float> image_patches(const EcgImage& image, const ModelConfig& config);

/// Lead-major patches of one record at the decoder's T: (12, T / signal_patch,
/// signal_patch), zero-padded at the end when needed.
std::vector<float> record_patches(const EcgRecord& record, const ModelConfig& config);

template <typename T>
struct Projections {
  ad::Tensor<T> z_rec, z_ctr;
};

/// Image encoder, projection heads and decoder (trained in stage 1), plus the
/// signal and text teachers (trained in stage 0, then frozen).
template <typename T>
class AlignmentModel {
 public:
  explicit AlignmentModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParameterRegistry<T>& student() { return student_; }
  const ParameterRegistry<T>& student() const { return student_; }
  ParameterRegistry<T>& teachers() { return teachers_; }
  const ParameterRegistry<T>& teachers() const { return teachers_; }

  /// (B, n_image_patches, patch^2) patch tensor -> z_img (B, d_img).
  ad::Tensor<T> encode_image_patches(const ad::Tensor<T>& patches) const;
  /// Convenience over image_patches(); throws ShapeError for a wrong size.
  ad::Tensor<T> encode_images(const std::vector<const EcgImage*>& images) const;

  Projections<T> project(const ad::Tensor<T>& z_img) const;

  /// Decodes (B, d_sig) latents into (B, 12, T). With `training`, each sample
  /// masks floor(mask_ratio * N_p) query tokens chosen by its seed.
  ad::Tensor<T> decode(const ad::Tensor<T>& z_rec, const std::vector<std::uint64_t>& mask_seeds, bool training) const;

  /// Teacher forward passes usable during stage 0.
  ad::Tensor<T> signal_forward(const std::vector<const EcgRecord*>& records) const;
  ad::Tensor<T> text_forward(const std::vector<const ReportText*>& reports) const;

  /// Frozen-teacher embeddings (B, d_sig); LifecycleError before freeze_teachers().
  ad::Tensor<T> encode_signal(const std::vector<const EcgRecord*>& records) const;
  ad::Tensor<T> encode_text(const std::vector<const ReportText*>& reports) const;

  void freeze_teachers();
  bool teachers_frozen() const { return frozen_; }

  /// Query tokens masked for one sample.
  std::vector<std::size_t> masked_tokens(std::uint64_t mask_seed) const;

 private:
  ad::Tensor<T> affine(const ParameterRegistry<T>& reg, const std::string& name, const ad::Tensor<T>& x) const;
  ad::Tensor<T> norm(const std::string& name, const ad::Tensor<T>& x) const;
  ad::Tensor<T> block(std::size_t layer, const ad::Tensor<T>& x) const;

  ModelConfig config_;
  ParameterRegistry<T> student_;
  ParameterRegistry<T> teachers_;
  bool frozen_ = false;
};

extern template class ParameterRegistry<float>;
extern template class ParameterRegistry<double>;
extern template class AlignmentModel<float>;
extern template class AlignmentModel<double>;

}  // namespace ecglab
