#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ecglab/error.hpp"
#include "ecglab/losses/losses.hpp"
#include "ecglab/models/models.hpp"
#include "ecglab/pipeline/optim.hpp"
#include "ecglab/random.hpp"
#include "ecglab/signal/synth.hpp"

using namespace ecglab;
using Tf = ad::Tensor<float>;

namespace {

ModelConfig small_config(std::uint64_t seed = 0) {
  ModelConfig m;
  m.d_img = 16;
  m.d_sig = 8;
  m.decoder = {2, 16, 2, 8, 0.25};
  m.n_samples = 200;
  m.image_width = 64;
  m.image_height = 48;
  m.grid_rows = 32;
  m.grid_cols = 32;
  m.image_patch = 8;
  m.image_hidden = 16;
  m.signal_patch = 20;
  m.signal_hidden = 16;
  m.text_dim = 8;
  m.seed = seed;
  return m;
}

EcgImage solid(const ModelConfig& m, std::uint8_t v) {
  EcgImage img;
  img.width = m.image_width;
  img.height = m.image_height;
  img.pixels.assign(static_cast<std::size_t>(img.width * img.height * 3), v);
  return img;
}

Tf random_tensor(ad::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-scale, scale));
  return Tf::constant(std::move(shape), std::move(v));
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("image encoder shapes and inputs") {
  const ModelConfig m = small_config();
  AlignmentModel<float> model(m);
  const EcgImage black = solid(m, 0), white = solid(m, 255);
  const Tf z = model.encode_images({&black, &white});
  REQUIRE(z.shape() == ad::Shape{2, m.d_img});
  CHECK(max_abs_diff(z.data().subspan(0, m.d_img), z.data().subspan(m.d_img)) > 1e-4);

  const auto p = image_patches(white, m);
  CHECK(p.size() == m.n_image_patches() * m.image_patch * m.image_patch);
  CHECK(std::all_of(p.begin(), p.end(), [](float v) { return v == 0.0f; }));  // white paper is no ink
  const auto q = image_patches(black, m);
  CHECK(std::all_of(q.begin(), q.end(), [](float v) { return v == 1.0f; }));

  EcgImage wrong = solid(m, 0);
  wrong.width += 1;
  wrong.pixels.resize(static_cast<std::size_t>(wrong.width * wrong.height * 3));
  CHECK_THROWS_AS(image_patches(wrong, m), ShapeError);
}

TEST_CASE("parameter init is deterministic in the seed") {
  AlignmentModel<float> a(small_config(3)), b(small_config(3)), c(small_config(4));
  CHECK(a.student().checksum() == b.student().checksum());
  CHECK(a.teachers().checksum() == b.teachers().checksum());
  CHECK(a.student().checksum() != c.student().checksum());
  CHECK_THROWS_AS(a.student().get("no/such"), LookupError);
  CHECK_THROWS_AS(a.student().add("image/fc1/w", {1}, {0.0f}), ParameterError);
}

TEST_CASE("projection heads") {
  const ModelConfig m = small_config();
  AlignmentModel<float> model(m);
  Rng rng(1);
  const auto p = model.project(random_tensor({4, m.d_img}, rng, 50.0));
  REQUIRE(p.z_rec.shape() == ad::Shape{4, m.d_sig});
  REQUIRE(p.z_ctr.shape() == ad::Shape{4, m.d_sig});
  for (float v : p.z_rec.data()) CHECK(std::abs(v) <= 1.0f);
  for (float v : p.z_ctr.data()) CHECK(std::abs(v) <= 1.0f);
  CHECK(max_abs_diff(p.z_rec.data(), p.z_ctr.data()) > 1e-3);

  // Biases start at zero, so a zero embedding maps to tanh(0) = 0.
  const auto zero = model.project(Tf::zeros({1, m.d_img}));
  for (float v : zero.z_ctr.data()) CHECK(v == 0.0f);
}

TEST_CASE("teacher lifecycle") {
  const ModelConfig m = small_config();
  AlignmentModel<float> model(m);
  SynthParams sp;
  sp.fs = 100.0;
  sp.duration = 2.0;
  const LabeledSample s = synth_ecg(sp);
  CHECK_THROWS_AS(model.encode_signal({&s.record}), LifecycleError);
  CHECK_THROWS_AS(model.encode_text({&s.report}), LifecycleError);
  CHECK(model.signal_forward({&s.record}).shape() == ad::Shape{1, m.d_sig});

  const ReportText slow = tokenize("sinus rhythm . heart rate 60 bpm ."), fast = tokenize("sinus rhythm . heart rate 90 bpm .");
  const Tf t = model.text_forward({&slow, &fast});
  CHECK(max_abs_diff(t.data().subspan(0, m.d_sig), t.data().subspan(m.d_sig)) > 1e-5);

  model.freeze_teachers();
  CHECK(model.teachers_frozen());
  const auto before = model.teachers().checksum();
  const Tf z = model.encode_signal({&s.record});
  CHECK(!z.requires_grad());
  for (const auto& [name, p] : model.teachers().all()) CHECK(!p.requires_grad());
  CHECK(model.teachers().checksum() == before);

  EcgRecord short_rec = EcgRecord::zeros(100.0, 100);
  CHECK_THROWS_AS(model.encode_signal({&short_rec}), ShapeError);
}

TEST_CASE("decoder shapes and masking") {
  ModelConfig m = small_config();
  AlignmentModel<float> model(m);
  Rng rng(2);
  const Tf z = random_tensor({3, m.d_sig}, rng);
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    const Tf x = model.decode(z, {seed, seed + 1, seed + 2}, true);
    CHECK(x.shape() == ad::Shape{3, kNumLeads, m.n_samples});
  }
  CHECK_THROWS_AS(model.decode(z, {1, 2}, true), ShapeError);

  const auto masked = model.masked_tokens(5);
  CHECK(masked.size() == static_cast<std::size_t>(std::floor(0.25 * 25)));
  CHECK(std::adjacent_find(masked.begin(), masked.end()) == masked.end());
  CHECK(masked == model.masked_tokens(5));
  CHECK(masked != model.masked_tokens(6));

  // Inference ignores the seeds; training with different seeds differs.
  CHECK(max_abs_diff(model.decode(z, {1, 2, 3}, false).data(), model.decode(z, {4, 5, 6}, false).data()) == 0.0);
  CHECK(max_abs_diff(model.decode(z, {1, 2, 3}, true).data(), model.decode(z, {4, 5, 6}, true).data()) > 0.0);

  ModelConfig all = m;
  all.decoder.mask_ratio = 1.0;
  AlignmentModel<float> fully(all);
  const Tf y = fully.decode(z, {1, 2, 3}, true);
  CHECK(std::all_of(y.data().begin(), y.data().end(), [](float v) { return std::isfinite(v); }));

  ModelConfig odd = m;
  odd.n_samples = 203;  // padded to 26 patches
  AlignmentModel<float> padded(odd);
  CHECK(padded.decode(z, {1, 2, 3}, false).shape() == ad::Shape{3, kNumLeads, 203});
  odd.pad_to_patch = false;
  CHECK_THROWS_AS(odd.validate(), ParameterError);

  ModelConfig full = ModelConfig::paper_scale();
  CHECK(full.n_samples == 5000);
  CHECK(full.n_queries() == 625);
}

TEST_CASE("decoder uses positional embeddings") {
  const ModelConfig m = small_config();
  AlignmentModel<float> model(m);
  Rng rng(3);
  const Tf z = random_tensor({2, m.d_sig}, rng);
  const Tf first = model.decode(z, {0, 0}, false);
  const std::vector<float> before(first.data().begin(), first.data().end());

  // Swap two rows of the position table: the reconstruction has to change.
  auto pos = model.student().get("decoder/positions").mutable_data();
  const std::size_t d = m.decoder.d;
  std::swap_ranges(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(d), pos.begin() + static_cast<std::ptrdiff_t>(3 * d));
  const Tf after = model.decode(z, {0, 0}, false);
  CHECK(max_abs_diff(before, after.data()) > 1e-4);
}

TEST_CASE("masked decoder training reduces reconstruction error") {
  const ModelConfig m = small_config(11);
  AlignmentModel<float> model(m);
  std::vector<float> target;
  std::vector<Tf> zs;
  for (double hr : {55.0, 80.0, 120.0, 70.0}) {
    SynthParams sp;
    sp.fs = 100.0;
    sp.duration = 2.0;
    sp.heart_rate = hr;
    const auto s = synth_ecg(sp);
    target.insert(target.end(), s.record.samples().begin(), s.record.samples().end());
  }
  Rng rng(4);
  const Tf z = random_tensor({4, m.d_sig}, rng);
  const Tf x = Tf::constant({4, kNumLeads, m.n_samples}, std::move(target));
  std::vector<std::pair<std::string, Tf>> params;
  for (auto& [name, p] : model.student().all()) params.emplace_back(name, p);
  AdamW opt(params, {});
  auto eval = [&] { return recon_mse(model.decode(z, {0, 0, 0, 0}, false), x).item(); };
  const double start = eval();
  for (std::size_t step = 0; step < 200; ++step) {
    const Tf loss = recon_mse(model.decode(z, {step, step + 1000, step + 2000, step + 3000}, true), x);
    model.student().zero_grad();
    ad::backward(loss);
    opt.step(3e-3);
  }
  const double end = eval();
  MESSAGE("mse " << start << " -> " << end);
  CHECK(end < 0.5 * start);
}
