#include "ecglab/render/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "ecglab/error.hpp"
#include "ecglab/hash.hpp"
#include "ecglab/random.hpp"
#include "ecglab/render/render.hpp"

namespace ecglab {

namespace {

void check_range(const Range& r, double lo, double hi, const char* field) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
    throw ParameterError(std::string("augment: ") + field + " range must satisfy " +
                         std::to_string(lo) + " <= lo <= hi <= " + std::to_string(hi));
  }
}

std::uint8_t clamp_u8(long v) { return static_cast<std::uint8_t>(std::clamp(v, 0L, 255L)); }

void rotate(EcgImage& img, double degrees) {
  const int w = img.width;
  const int h = img.height;
  const std::vector<std::uint8_t> src = img.pixels;
  const double a = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return src.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                         static_cast<std::size_t>(x)) * 3;
  };
  // Inverse map into the source in 16.16 fixed point, stepped exactly per
  // column; 8-bit bilinear weights from the fraction.
  const long step_x = std::lround(c * 65536.0);
  const long step_y = std::lround(-s * 65536.0);
  for (int y = 0; y < h; ++y) {
    const double dy = y - cy;
    long fx = std::lround((c * -cx + s * dy + cx) * 65536.0);
    long fy = std::lround((-s * -cx + c * dy + cy) * 65536.0);
    std::uint8_t* d = img.at(0, y);
    for (int x = 0; x < w; ++x, fx += step_x, fy += step_y, d += 3) {
      const int ix = static_cast<int>(fx >> 16);
      const int iy = static_cast<int>(fy >> 16);
      const long wx = (fx >> 8) & 255;
      const long wy = (fy >> 8) & 255;
      const std::uint8_t* p00;
      const std::uint8_t* p10;
      const std::uint8_t* p01;
      const std::uint8_t* p11;
      if (ix >= 0 && iy >= 0 && ix + 1 < w && iy + 1 < h) {
        p00 = src.data() + (static_cast<std::size_t>(iy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(ix)) * 3;
        p10 = p00 + 3;
        p01 = p00 + static_cast<std::size_t>(w) * 3;
        p11 = p01 + 3;
      } else {
        p00 = px(ix, iy);
        p10 = px(ix + 1, iy);
        p01 = px(ix, iy + 1);
        p11 = px(ix + 1, iy + 1);
      }
      for (int ch = 0; ch < 3; ++ch) {
        const long v = (256 - wx) * (256 - wy) * p00[ch] + wx * (256 - wy) * p10[ch] +
                       (256 - wx) * wy * p01[ch] + wx * wy * p11[ch];
        d[ch] = static_cast<std::uint8_t>((v + 32768) >> 16);
      }
    }
  }
}

// Counter-based approximately Gaussian noise (Irwin-Hall with four 16-bit
// uniforms), the same offset on all three channels.
void add_noise(EcgImage& img, double sigma_fraction, std::uint64_t seed) {
  // z = (sum - 2^17) / 2^16 has unit-scaled variance 1/3; q is the per-unit
  // offset in 16.16 fixed point, so offset = round(z * scale).
  const long long q = std::llround(sigma_fraction * 255.0 * std::sqrt(3.0) * 65536.0);
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t r = mix64(seed + i);
    const long long sum = static_cast<long long>((r & 0xffff) + ((r >> 16) & 0xffff) + ((r >> 32) & 0xffff) + (r >> 48));
    const long offset = static_cast<long>(((sum - 131072) * q + (1LL << 31)) >> 32);
    if (offset == 0) continue;
    std::uint8_t* p = img.pixels.data() + i * 3;
    for (int ch = 0; ch < 3; ++ch) p[ch] = clamp_u8(p[ch] + offset);
  }
}

void apply_lut(EcgImage& img, const std::array<std::uint8_t, 256>& lut) {
  for (auto& v : img.pixels) v = lut[v];
}

}  // namespace

void AugmentConfig::validate() const {
  check_range(rotation_deg, -3.0, 3.0, "rotation_deg");
  check_range(gauss_noise_sigma, 0.0, 0.05, "gauss_noise_sigma");
  check_range(contrast, 0.8, 1.2, "contrast");
  check_range(brightness, -0.1, 0.1, "brightness");
  if (!(apply_prob >= 0.0 && apply_prob <= 1.0)) {
    throw ParameterError("augment: apply_prob must be in [0, 1]");
  }
}

EcgImage augment(const EcgImage& image, const AugmentConfig& aug) {
  aug.validate();
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) *
                                 static_cast<std::size_t>(image.height) * 3) {
    throw ParameterError("augment: image buffer does not match its dimensions");
  }
  EcgImage out = image;
  Rng rng(derive_seed({aug.seed, fnv1a64(image.pixels)}));

  // Every parameter is drawn whether or not its transform fires, so the
  // stream layout does not depend on the gates.
  const bool do_rotate = rng.bernoulli(aug.apply_prob);
  const double angle = rng.uniform(aug.rotation_deg.lo, aug.rotation_deg.hi);
  const bool do_noise = rng.bernoulli(aug.apply_prob);
  const double sigma = rng.uniform(aug.gauss_noise_sigma.lo, aug.gauss_noise_sigma.hi);
  const std::uint64_t noise_seed = rng.next_u64();
  const bool do_contrast = rng.bernoulli(aug.apply_prob);
  const double contrast = rng.uniform(aug.contrast.lo, aug.contrast.hi);
  const bool do_brightness = rng.bernoulli(aug.apply_prob);
  const double brightness = rng.uniform(aug.brightness.lo, aug.brightness.hi);
  const bool do_jitter = aug.grid_color_jitter && rng.bernoulli(aug.apply_prob);
  std::array<long, 3> jitter{};
  for (auto& j : jitter) j = static_cast<long>(rng.below(81)) - 40;

  if (do_rotate) rotate(out, angle);
  if (do_noise) add_noise(out, sigma, noise_seed);
  if (do_contrast) {
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) lut[v] = clamp_u8(std::lround((v - 127.5) * contrast + 127.5));
    apply_lut(out, lut);
  }
  if (do_brightness) {
    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) lut[v] = clamp_u8(std::lround(v + brightness * 255.0));
    apply_lut(out, lut);
  }
  if (do_jitter) {
    // Mid-luminance pixels are grid lines; background and ink are untouched.
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
      std::uint8_t* p = out.pixels.data() + i;
      const int lum = luminance(p);
      if (lum < 120 || lum >= 250) continue;
      for (int ch = 0; ch < 3; ++ch) p[ch] = clamp_u8(p[ch] + jitter[ch]);
    }
  }

  auto& trace = out.meta.augment_trace;
  trace.push_back({"rotate", do_rotate, {angle}});
  trace.push_back({"noise", do_noise, {sigma}});
  trace.push_back({"contrast", do_contrast, {contrast}});
  trace.push_back({"brightness", do_brightness, {brightness}});
  trace.push_back({"grid_jitter", do_jitter,
                   {static_cast<double>(jitter[0]), static_cast<double>(jitter[1]),
                    static_cast<double>(jitter[2])}});
  return out;
}

}  // namespace ecglab
