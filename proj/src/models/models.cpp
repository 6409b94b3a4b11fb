#include "ecglab/models/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ecglab/error.hpp"
#include "ecglab/hash.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

using ad::Shape;
using ad::Tensor;

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ParameterError(std::string("model config: ") + name + " must be > 0");
  };
  positive(d_img, "d_img");
  positive(d_sig, "d_sig");
  positive(decoder.layers, "decoder.layers");
  positive(decoder.d, "decoder.d");
  positive(decoder.heads, "decoder.heads");
  positive(decoder.patch, "decoder.patch");
  positive(n_samples, "n_samples");
  positive(image_patch, "image_patch");
  positive(image_hidden, "image_hidden");
  positive(signal_patch, "signal_patch");
  positive(signal_hidden, "signal_hidden");
  positive(text_dim, "text_dim");
  if (decoder.d % decoder.heads != 0) throw ParameterError("model config: decoder.d must be divisible by decoder.heads");
  if (!(decoder.mask_ratio >= 0.0 && decoder.mask_ratio <= 1.0)) {
    throw ParameterError("model config: decoder.mask_ratio must be in [0, 1]");
  }
  if (!pad_to_patch && n_samples % decoder.patch != 0) {
    throw ParameterError("model config: decoder.patch does not divide n_samples and padding is disabled");
  }
  if (grid_rows % image_patch != 0 || grid_cols % image_patch != 0) {
    throw ParameterError("model config: image_patch must divide grid_rows and grid_cols");
  }
  if (image_width < static_cast<int>(grid_cols) || image_height < static_cast<int>(grid_rows)) {
    throw ParameterError("model config: image size is smaller than the encoder grid");
  }
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.d_img = 1024;
  c.d_sig = 768;
  c.decoder = {12, 768, 12, 8, 0.25};
  c.n_samples = 5000;
  c.image_width = 2160;
  c.image_height = 1120;
  c.signal_patch = 50;
  c.signal_hidden = 768;
  c.text_dim = 768;
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T>& ParameterRegistry<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
  if (params_.count(name)) throw ParameterError("parameter registry: duplicate name \"" + name + "\"");
  return params_.emplace(name, Tensor<T>::parameter(std::move(shape), std::move(values))).first->second;
}

template <typename T>
const Tensor<T>& ParameterRegistry<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("unknown parameter \"" + name + "\"");
  return it->second;
}

template <typename T>
Tensor<T>& ParameterRegistry<T>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError("unknown parameter \"" + name + "\"");
  return it->second;
}

template <typename T>
std::size_t ParameterRegistry<T>::numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void ParameterRegistry<T>::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

template <typename T>
void ParameterRegistry<T>::freeze() {
  for (auto& [_, t] : params_) {
    t.zero_grad();
    t.node()->requires_grad = false;
  }
}

template <typename T>
std::uint64_t ParameterRegistry<T>::checksum() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, t] : params_) {
    h = fnv1a64(name, h);
    for (auto d : t.shape()) h = fnv1a64(std::to_string(d), h);
    h = fnv1a64(std::span(reinterpret_cast<const unsigned char*>(t.data().data()), t.numel() * sizeof(T)), h);
  }
  return h;
}

// ---------------------------------------------------------------------------

std::vector<float> image_patches(const EcgImage& image, const ModelConfig& c) {
  if (image.width != c.image_width || image.height != c.image_height) {
    throw ShapeError("image encoder: expected a " + std::to_string(c.image_width) + "x" + std::to_string(c.image_height) +
                     " image, got " + std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  const std::size_t rows = c.grid_rows, cols = c.grid_cols, p = c.image_patch;
  // Integer box boundaries: cell r covers source rows [r H / rows, (r + 1) H / rows).
  std::vector<std::size_t> ry(rows + 1), cx(cols + 1);
  for (std::size_t r = 0; r <= rows; ++r) ry[r] = r * static_cast<std::size_t>(image.height) / rows;
  for (std::size_t k = 0; k <= cols; ++k) cx[k] = k * static_cast<std::size_t>(image.width) / cols;

  std::vector<std::uint32_t> col_sum(cols);
  std::vector<float> grid(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(col_sum.begin(), col_sum.end(), 0u);
    for (std::size_t y = ry[r]; y < ry[r + 1]; ++y) {
      const std::uint8_t* px = image.at(0, static_cast<int>(y));
      for (std::size_t k = 0; k < cols; ++k) {
        std::uint32_t s = 0;
        for (std::size_t x = cx[k]; x < cx[k + 1]; ++x) {
          const std::uint8_t* q = px + 3 * x;
          s += 299u * q[0] + 587u * q[1] + 114u * q[2];
        }
        col_sum[k] += s;
      }
    }
    for (std::size_t k = 0; k < cols; ++k) {
      const double area = static_cast<double>((ry[r + 1] - ry[r]) * (cx[k + 1] - cx[k]));
      grid[r * cols + k] = static_cast<float>(1.0 - col_sum[k] / (area * 255000.0));
    }
  }

  const std::size_t pr = rows / p, pc = cols / p;
  std::vector<float> out(rows * cols);
  for (std::size_t a = 0; a < pr; ++a)
    for (std::size_t b = 0; b < pc; ++b)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) out[((a * pc + b) * p + i) * p + j] = grid[(a * p + i) * cols + b * p + j];
  return out;
}

std::vector<float> record_patches(const EcgRecord& record, const ModelConfig& c) {
  if (record.n_samples() != c.n_samples) {
    throw ShapeError("signal encoder: expected " + std::to_string(c.n_samples) + " samples, got " +
                     std::to_string(record.n_samples()));
  }
  const std::size_t n = (c.n_samples + c.signal_patch - 1) / c.signal_patch;
  const std::size_t padded = n * c.signal_patch;
  std::vector<float> out(kNumLeads * padded, 0.0f);
  for (std::size_t l = 0; l < kNumLeads; ++l) std::copy_n(record.lead(l).data(), c.n_samples, out.data() + l * padded);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::vector<T> xavier(std::uint64_t seed, std::size_t fan_in, std::size_t fan_out, std::size_t count) {
  Rng rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(count);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
  return v;
}

template <typename T>
std::vector<T> gaussian(std::uint64_t seed, double sigma, std::size_t count) {
  Rng rng(seed);
  std::vector<T> v(count);
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, sigma));
  return v;
}

template <typename T>
struct Builder {
  ParameterRegistry<T>& reg;
  std::uint64_t seed;

  std::uint64_t seed_for(const std::string& name) const { return derive_seed({seed, fnv1a64(name)}); }

  void linear(const std::string& name, std::size_t in, std::size_t out, std::size_t groups = 0) {
    Shape w = groups ? Shape{groups, in, out} : Shape{in, out};
    reg.add(name + "/w", w, xavier<T>(seed_for(name + "/w"), in, out, ad::numel(w)));
    reg.add(name + "/b", {out}, std::vector<T>(out, T{0}));
  }
  void layer_norm(const std::string& name, std::size_t d) {
    reg.add(name + "/gain", {d}, std::vector<T>(d, T{1}));
    reg.add(name + "/bias", {d}, std::vector<T>(d, T{0}));
  }
  void embedding(const std::string& name, Shape shape, double sigma) {
    const std::size_t n = ad::numel(shape);
    reg.add(name, std::move(shape), gaussian<T>(seed_for(name), sigma, n));
  }
};

}  // namespace

template <typename T>
AlignmentModel<T>::AlignmentModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.decoder.d;
  Builder<T> s{student_, c.seed};
  s.linear("image/fc1", c.image_patch * c.image_patch, c.image_hidden);
  s.embedding("image/positions", {c.n_image_patches(), c.image_hidden}, 0.02);
  s.linear("image/fc2", c.image_hidden, c.image_hidden);
  s.linear("image/out", c.image_hidden, c.d_img);
  s.linear("proj_rec", c.d_img, c.d_sig);
  s.linear("proj_ctr", c.d_img, c.d_sig);
  s.linear("decoder/in", c.d_sig, d);
  s.embedding("decoder/queries", {c.n_queries(), d}, 0.02);
  s.embedding("decoder/positions", {c.n_queries(), d}, 0.02);
  s.embedding("decoder/mask", {d}, 0.02);
  for (std::size_t l = 0; l < c.decoder.layers; ++l) {
    const std::string p = "decoder/block" + std::to_string(l);
    s.layer_norm(p + "/ln1", d);
    s.linear(p + "/qkv", d, 3 * d);
    s.linear(p + "/attn_out", d, d);
    s.layer_norm(p + "/ln2", d);
    s.linear(p + "/ff1", d, 4 * d);
    s.linear(p + "/ff2", 4 * d, d);
  }
  s.layer_norm("decoder/ln_final", d);
  s.linear("decoder/out", d, kNumLeads * c.decoder.patch);

  Builder<T> t{teachers_, derive_seed({c.seed, 0x7eac4e5ULL})};
  t.linear("signal/fc1", c.signal_patch, c.signal_hidden, kNumLeads);
  t.linear("signal/fc2", c.signal_hidden, c.signal_hidden);
  t.linear("signal/out", c.signal_hidden, c.d_sig);
  t.embedding("text/embed", {vocab_size(), c.text_dim}, 1.0);
  t.linear("text/out", c.text_dim, c.d_sig);
}

template <typename T>
Tensor<T> AlignmentModel<T>::affine(const ParameterRegistry<T>& reg, const std::string& name, const Tensor<T>& x) const {
  return ad::add(ad::matmul(x, reg.get(name + "/w")), reg.get(name + "/b"));
}

template <typename T>
Tensor<T> AlignmentModel<T>::norm(const std::string& name, const Tensor<T>& x) const {
  return ad::add(ad::mul(ad::layer_norm_rows(x), student_.get(name + "/gain")), student_.get(name + "/bias"));
}

template <typename T>
Tensor<T> AlignmentModel<T>::encode_image_patches(const Tensor<T>& patches) const {
  const auto& c = config_;
  if (patches.ndim() != 3 || patches.dim(1) != c.n_image_patches() || patches.dim(2) != c.image_patch * c.image_patch) {
    throw ShapeError("image encoder: expected (B, " + std::to_string(c.n_image_patches()) + ", " +
                     std::to_string(c.image_patch * c.image_patch) + ") patches, got " + ad::to_string(patches.shape()));
  }
  // Patch positions tell the encoder which lead panel and time window it sees.
  Tensor<T> h = ad::relu(ad::add(affine(student_, "image/fc1", patches), student_.get("image/positions")));
  h = ad::relu(affine(student_, "image/fc2", h));
  return affine(student_, "image/out", ad::mean_axis(h, 1));
}

template <typename T>
Tensor<T> AlignmentModel<T>::encode_images(const std::vector<const EcgImage*>& images) const {
  const auto& c = config_;
  const std::size_t per = c.n_image_patches() * c.image_patch * c.image_patch;
  std::vector<T> data;
  data.reserve(images.size() * per);
  for (const EcgImage* img : images) {
    const auto p = image_patches(*img, c);
    data.insert(data.end(), p.begin(), p.end());
  }
  return encode_image_patches(
      Tensor<T>::constant({images.size(), c.n_image_patches(), c.image_patch * c.image_patch}, std::move(data)));
}

template <typename T>
Projections<T> AlignmentModel<T>::project(const Tensor<T>& z_img) const {
  return {ad::tanh(affine(student_, "proj_rec", z_img)), ad::tanh(affine(student_, "proj_ctr", z_img))};
}

template <typename T>
std::vector<std::size_t> AlignmentModel<T>::masked_tokens(std::uint64_t mask_seed) const {
  const std::size_t n = config_.n_queries();
  const auto k = static_cast<std::size_t>(std::floor(config_.decoder.mask_ratio * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mask_seed);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename T>
Tensor<T> AlignmentModel<T>::block(std::size_t layer, const Tensor<T>& x) const {
  const std::string p = "decoder/block" + std::to_string(layer);
  const std::size_t d = config_.decoder.d, heads = config_.decoder.heads, dh = d / heads;
  const Tensor<T> qkv = affine(student_, p + "/qkv", norm(p + "/ln1", x));
  std::vector<Tensor<T>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(ad::scaled_dot_attention(ad::slice(qkv, 2, h * dh, dh), ad::slice(qkv, 2, d + h * dh, dh),
                                            ad::slice(qkv, 2, 2 * d + h * dh, dh)));
  }
  const Tensor<T> y = ad::add(x, affine(student_, p + "/attn_out", ad::concat(outs, 2)));
  const Tensor<T> f = affine(student_, p + "/ff2", ad::relu(affine(student_, p + "/ff1", norm(p + "/ln2", y))));
  return ad::add(y, f);
}

template <typename T>
Tensor<T> AlignmentModel<T>::decode(const Tensor<T>& z_rec, const std::vector<std::uint64_t>& mask_seeds,
                                    bool training) const {
  const auto& c = config_;
  if (z_rec.ndim() != 2 || z_rec.dim(1) != c.d_sig) {
    throw ShapeError("decoder: expected (B, " + std::to_string(c.d_sig) + ") latents, got " + ad::to_string(z_rec.shape()));
  }
  const std::size_t b = z_rec.dim(0), n = c.n_queries(), d = c.decoder.d, p = c.decoder.patch;
  const Tensor<T> z = affine(student_, "decoder/in", z_rec);
  const Tensor<T> z_tokens = ad::matmul(Tensor<T>::full({b, n, 1}, T{1}), ad::reshape(z, {b, 1, d}));

  Tensor<T> queries = student_.get("decoder/queries");
  if (training && c.decoder.mask_ratio > 0.0) {
    if (mask_seeds.size() != b) {
      throw ShapeError("decoder: " + std::to_string(mask_seeds.size()) + " mask seeds for a batch of " + std::to_string(b));
    }
    std::vector<T> keep(b * n * d, T{1});
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t tok : masked_tokens(mask_seeds[s])) std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>((s * n + tok) * d), d, T{0});
    std::vector<T> drop(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) drop[i] = T{1} - keep[i];
    queries = ad::add(ad::mul(Tensor<T>::constant({b, n, d}, std::move(keep)), queries),
                      ad::mul(Tensor<T>::constant({b, n, d}, std::move(drop)), student_.get("decoder/mask")));
  }
  Tensor<T> x = ad::add(ad::add(z_tokens, queries), student_.get("decoder/positions"));
  for (std::size_t l = 0; l < c.decoder.layers; ++l) x = block(l, x);
  const Tensor<T> y = affine(student_, "decoder/out", norm("decoder/ln_final", x));  // (B, N, 12 P)

  std::vector<Tensor<T>> leads;
  for (std::size_t lead = 0; lead < kNumLeads; ++lead) leads.push_back(ad::reshape(ad::slice(y, 2, lead * p, p), {b, 1, n * p}));
  Tensor<T> out = ad::concat(leads, 1);
  if (n * p != c.n_samples) out = ad::slice(out, 2, 0, c.n_samples);
  return out;
}

template <typename T>
Tensor<T> AlignmentModel<T>::signal_forward(const std::vector<const EcgRecord*>& records) const {
  const auto& c = config_;
  const std::size_t b = records.size();
  const std::size_t n = (c.n_samples + c.signal_patch - 1) / c.signal_patch, sp = c.signal_patch, h = c.signal_hidden;
  // (12, B * n, sp): the batched matmul applies one weight matrix per lead.
  std::vector<T> data(kNumLeads * b * n * sp);
  for (std::size_t s = 0; s < b; ++s) {
    const auto p = record_patches(*records[s], c);
    for (std::size_t l = 0; l < kNumLeads; ++l)
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(l * n * sp), n * sp,
                  data.begin() + static_cast<std::ptrdiff_t>((l * b + s) * n * sp));
  }
  const Tensor<T> x = Tensor<T>::constant({kNumLeads, b * n, sp}, std::move(data));
  Tensor<T> hid = ad::relu(affine(teachers_, "signal/fc1", x));
  hid = ad::relu(affine(teachers_, "signal/fc2", ad::reshape(hid, {kNumLeads * b * n, h})));
  const Tensor<T> pooled = ad::scale(ad::sum_axis(ad::sum_axis(ad::reshape(hid, {kNumLeads, b, n, h}), 2), 0),
                                     T{1} / static_cast<T>(kNumLeads * n));
  return affine(teachers_, "signal/out", pooled);
}

template <typename T>
Tensor<T> AlignmentModel<T>::text_forward(const std::vector<const ReportText*>& reports) const {
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> lengths;
  for (const ReportText* r : reports) {
    if (r->tokens.empty()) throw ParameterError("text encoder: empty report");
    for (auto id : r->tokens) {
      if (id >= vocab_size()) throw VocabularyError("text encoder: token id " + std::to_string(id) + " outside the vocabulary");
    }
    ids.insert(ids.end(), r->tokens.begin(), r->tokens.end());
    lengths.push_back(r->tokens.size());
  }
  std::vector<T> pool(reports.size() * ids.size(), T{0});
  std::size_t offset = 0;
  for (std::size_t s = 0; s < reports.size(); ++s) {
    for (std::size_t k = 0; k < lengths[s]; ++k) pool[s * ids.size() + offset + k] = T{1} / static_cast<T>(lengths[s]);
    offset += lengths[s];
  }
  const Tensor<T> bag = ad::matmul(Tensor<T>::constant({reports.size(), ids.size()}, std::move(pool)),
                                   ad::gather_rows(teachers_.get("text/embed"), ids));
  return affine(teachers_, "text/out", bag);
}

template <typename T>
Tensor<T> AlignmentModel<T>::encode_signal(const std::vector<const EcgRecord*>& records) const {
  if (!frozen_) throw LifecycleError("signal teacher used before stage-0 pretraining finished");
  return signal_forward(records);
}

template <typename T>
Tensor<T> AlignmentModel<T>::encode_text(const std::vector<const ReportText*>& reports) const {
  if (!frozen_) throw LifecycleError("text teacher used before stage-0 pretraining finished");
  return text_forward(reports);
}

template <typename T>
void AlignmentModel<T>::freeze_teachers() {
  teachers_.freeze();
  frozen_ = true;
}

template class ParameterRegistry<float>;
template class ParameterRegistry<double>;
template class AlignmentModel<float>;
template class AlignmentModel<double>;

}  // namespace ecglab
