#include "ecglab/render/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "ecglab/error.hpp"
#include "ecglab/hash.hpp"
#include "font.hpp"

namespace ecglab {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kInk{0, 0, 0};

struct GridColors {
  Rgb minor, major;
};

GridColors grid_colors(GridStyle style) {
  if (style == GridStyle::kCoarseGray) return {{224, 224, 224}, {176, 176, 176}};
  return {{255, 214, 214}, {240, 150, 150}};
}

// Rows of the 3x4 block; column k shows [2.5k, 2.5(k+1)) s of its lead.
constexpr std::array<std::array<Lead, kGridCols>, kGridRows> kLayout = {{
    {Lead::I, Lead::aVR, Lead::V1, Lead::V4},
    {Lead::II, Lead::aVL, Lead::V2, Lead::V5},
    {Lead::III, Lead::aVF, Lead::V3, Lead::V6},
}};

int mm_to_px(double mm, int ppm) { return static_cast<int>(std::llround(mm * ppm)); }

void put(EcgImage& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::uint8_t* p = img.at(x, y);
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

// Integer Bresenham; every step moves to an 8-connected neighbour, so steep
// segments fill the full vertical span between consecutive samples.
void line(EcgImage& img, int x0, int y0, int x1, int y1, Rgb c, const PixelBox& clip) {
  const int dx = std::abs(x1 - x0);
  const int sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0);
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (clip.contains(x0, y0)) put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_grid(EcgImage& img, const PixelBox& box, int ppm, GridStyle style) {
  if (style == GridStyle::kNone) return;
  const GridColors colors = grid_colors(style);
  const int n_vertical = box.width() / ppm;  // floor(width_mm); lines at 0..n mm
  const int n_horizontal = box.height() / ppm;
  // Minor lines first so major lines win at the crossings.
  for (int pass = 0; pass < 2; ++pass) {
    for (int m = 0; m <= n_vertical; ++m) {
      const bool major = m % 5 == 0;
      if (major != (pass == 1)) continue;
      const int x = box.x0 + m * ppm;
      if (x >= img.width) continue;
      for (int y = box.y0; y < box.y1; ++y) put(img, x, y, major ? colors.major : colors.minor);
    }
    for (int m = 0; m <= n_horizontal; ++m) {
      const bool major = m % 5 == 0;
      if (major != (pass == 1)) continue;
      const int y = box.y0 + m * ppm;
      if (y >= img.height) continue;
      for (int x = box.x0; x < box.x1; ++x) put(img, x, y, major ? colors.major : colors.minor);
    }
  }
}

PixelBox draw_label(EcgImage* img, std::string_view text, int x, int y, int scale) {
  const int advance = (detail::kGlyphWidth + 1) * scale;
  PixelBox box{x, y, x + static_cast<int>(text.size()) * advance - scale,
               y + detail::kGlyphHeight * scale};
  if (img == nullptr) return box;
  int cx = x;
  for (char ch : text) {
    if (auto g = detail::glyph(ch)) {
      for (int row = 0; row < detail::kGlyphHeight; ++row) {
        for (int col = 0; col < detail::kGlyphWidth; ++col) {
          if (!((*g)[row] & (0x10 >> col))) continue;
          for (int sy = 0; sy < scale; ++sy) {
            for (int sx = 0; sx < scale; ++sx) put(*img, cx + col * scale + sx, y + row * scale + sy, kInk);
          }
        }
      }
    }
    cx += advance;
  }
  return box;
}

int label_scale(int ppm) { return std::max(1, ppm / 4); }

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(GridStyle style) {
  switch (style) {
    case GridStyle::kFineRed: return "fine-red";
    case GridStyle::kCoarseGray: return "coarse-gray";
    case GridStyle::kNone: return "none";
  }
  return "none";
}

GridStyle grid_style_from_string(std::string_view s) {
  if (s == "fine-red") return GridStyle::kFineRed;
  if (s == "coarse-gray") return GridStyle::kCoarseGray;
  if (s == "none") return GridStyle::kNone;
  throw ParameterError("grid_style must be one of fine-red, coarse-gray, none (got \"" +
                       std::string(s) + "\")");
}

void RenderConfig::validate() const {
  if (px_per_mm < 2 || px_per_mm > 20) throw ParameterError("render: px_per_mm must be in [2, 20]");
  if (!(paper_speed > 0.0) || !std::isfinite(paper_speed)) {
    throw ParameterError("render: paper_speed must be positive");
  }
  if (!(gain > 0.0) || !std::isfinite(gain)) throw ParameterError("render: gain must be positive");
  for (double m : {margins.left, margins.right, margins.top, margins.bottom}) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ParameterError("render: margins must be >= 0 mm");
  }
  if (show_calibration_pulse && margins.left < 8.0) {
    throw ParameterError("render: calibration pulse needs a left margin of at least 8 mm");
  }
}

std::string RenderConfig::hash() const {
  std::string canon = "px_per_mm=" + std::to_string(px_per_mm) +
                      ";paper_speed=" + fmt_double(paper_speed) + ";gain=" + fmt_double(gain) +
                      ";margins=" + fmt_double(margins.left) + "," + fmt_double(margins.right) +
                      "," + fmt_double(margins.top) + "," + fmt_double(margins.bottom) +
                      ";grid_style=" + std::string(to_string(grid_style)) +
                      ";show_labels=" + (show_labels ? "1" : "0") +
                      ";show_calibration_pulse=" + (show_calibration_pulse ? "1" : "0") +
                      ";seed=" + std::to_string(seed);
  return hex64(fnv1a64(canon));
}

int image_width_px(const RenderConfig& c) {
  return mm_to_px(c.margins.left + kPrintDuration * c.paper_speed + c.margins.right, c.px_per_mm);
}

int image_height_px(const RenderConfig& c) {
  return mm_to_px(c.margins.top + (kGridRows + 1) * kRowHeightMm + c.margins.bottom, c.px_per_mm);
}

std::vector<PanelInfo> layout_panels(const RenderConfig& c) {
  c.validate();
  const int ppm = c.px_per_mm;
  const double panel_mm = kPanelDuration * c.paper_speed;
  std::vector<PanelInfo> panels;
  auto make = [&](Lead lead, std::string id, int row, double mm_x0, double mm_x1, double t0,
                  double t1) {
    PanelInfo p;
    p.id = std::move(id);
    p.lead = lead;
    p.box = {mm_to_px(c.margins.left + mm_x0, ppm), mm_to_px(c.margins.top + row * kRowHeightMm, ppm),
             mm_to_px(c.margins.left + mm_x1, ppm),
             mm_to_px(c.margins.top + (row + 1) * kRowHeightMm, ppm)};
    p.t_start = t0;
    p.t_end = t1;
    p.baseline_y = mm_to_px(c.margins.top + row * kRowHeightMm + kBaselineFromRowTopMm, ppm);
    if (c.show_labels) {
      p.label_box = draw_label(nullptr, p.id == "rhythm" ? "II" : p.id, p.box.x0 + ppm,
                               p.box.y0 + ppm, label_scale(ppm));
    }
    panels.push_back(std::move(p));
  };
  for (int r = 0; r < kGridRows; ++r) {
    for (int k = 0; k < kGridCols; ++k) {
      const Lead lead = kLayout[r][k];
      make(lead, std::string(name(lead)), r, k * panel_mm, (k + 1) * panel_mm, k * kPanelDuration,
           (k + 1) * kPanelDuration);
    }
  }
  make(Lead::II, "rhythm", kGridRows, 0.0, kPrintDuration * c.paper_speed, 0.0, kPrintDuration);
  return panels;
}

EcgImage render(const EcgRecord& record, const RenderConfig& config) {
  config.validate();
  if (record.duration() < kPrintDuration - 1e-9) {
    throw ParameterError("render: record duration " + std::to_string(record.duration()) +
                         " s is shorter than the 10 s printout");
  }
  const int ppm = config.px_per_mm;

  EcgImage img;
  img.width = image_width_px(config);
  img.height = image_height_px(config);
  img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3,
                    kWhite.r);
  img.meta.config_hash = config.hash();
  img.meta.px_per_mm = ppm;
  img.meta.paper_speed = config.paper_speed;
  img.meta.gain = config.gain;
  img.meta.panels = layout_panels(config);

  for (const PanelInfo& p : img.meta.panels) draw_grid(img, p.box, ppm, config.grid_style);

  if (config.show_labels) {
    for (const PanelInfo& p : img.meta.panels) {
      draw_label(&img, p.id == "rhythm" ? "II" : p.id, p.label_box.x0, p.label_box.y0,
                 label_scale(ppm));
    }
  }

  if (config.show_calibration_pulse) {
    // 1 mV x 0.2 s pulse in the left margin of every row.
    const double px_per_mv = config.gain * ppm;
    const double ml = config.margins.left;
    const PixelBox whole{0, 0, img.width, img.height};
    for (int r = 0; r <= kGridRows; ++r) {
      const int base = mm_to_px(config.margins.top + r * kRowHeightMm + kBaselineFromRowTopMm, ppm);
      const int top = base - static_cast<int>(std::llround(px_per_mv));
      const int xa = mm_to_px(ml - 8.0, ppm);
      const int xb = mm_to_px(ml - 7.0, ppm);
      const int xc = mm_to_px(ml - 7.0 + 0.2 * config.paper_speed, ppm);
      const int xd = mm_to_px(ml - 1.0, ppm);
      line(img, xa, base, xb, base, kInk, whole);
      line(img, xb, base, xb, top, kInk, whole);
      line(img, xb, top, xc, top, kInk, whole);
      line(img, xc, top, xc, base, kInk, whole);
      line(img, xc, base, xd, base, kInk, whole);
    }
  }

  const double fs = record.fs();
  const double px_per_s = config.paper_speed * ppm;
  const double px_per_mv = config.gain * ppm;
  for (const PanelInfo& p : img.meta.panels) {
    auto lead = record.lead(p.lead);
    const auto n_lo = static_cast<std::size_t>(std::ceil(p.t_start * fs - 1e-9));
    const auto n_hi = static_cast<std::size_t>(std::ceil(p.t_end * fs - 1e-9));  // exclusive
    bool have_prev = false;
    int px = 0, py = 0;
    for (std::size_t n = n_lo; n < n_hi && n < record.n_samples(); ++n) {
      const double dt = static_cast<double>(n) / fs - p.t_start;
      const int x = std::min(p.box.x0 + static_cast<int>(std::floor(dt * px_per_s + 1e-9)), p.box.x1 - 1);
      int y = p.baseline_y - static_cast<int>(std::llround(static_cast<double>(lead[n]) * px_per_mv));
      y = std::clamp(y, p.box.y0, p.box.y1 - 1);
      if (have_prev) {
        line(img, px, py, x, y, kInk, p.box);
      } else {
        put(img, x, y, kInk);
      }
      px = x;
      py = y;
      have_prev = true;
    }
  }
  return img;
}

std::vector<double> extract_centerline(const EcgImage& image, const std::string& panel_id) {
  const PanelInfo& p = image.meta.panel(panel_id);
  if (image.meta.px_per_mm <= 0 || !(image.meta.gain > 0.0)) {
    throw ParameterError("extract_centerline: image metadata lacks the render calibration");
  }
  const double px_per_mv = image.meta.gain * image.meta.px_per_mm;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(p.box.width()));
  double previous = 0.0;
  std::vector<int> rows;
  for (int x = p.box.x0; x < p.box.x1; ++x) {
    int darkest = 256;
    rows.clear();
    for (int y = p.box.y0; y < p.box.y1; ++y) {
      if (p.label_box.contains(x, y)) continue;
      const int lum = luminance(image.at(x, y));
      if (lum >= kInkLuminance) continue;
      if (lum < darkest) {
        darkest = lum;
        rows.clear();
      }
      if (lum == darkest) rows.push_back(y);
    }
    if (!rows.empty()) {
      // Median of the darkest run; for even counts, the mean of the middle pair.
      const std::size_t m = rows.size();
      const double row = m % 2 ? rows[m / 2] : 0.5 * (rows[m / 2 - 1] + rows[m / 2]);
      previous = (p.baseline_y - row) / px_per_mv;
    }
    out.push_back(previous);
  }
  return out;
}

const PanelInfo& RenderMeta::panel(const std::string& id) const {
  for (const auto& p : panels) {
    if (p.id == id) return p;
  }
  throw LookupError("unknown panel \"" + id + "\"");
}

}  // namespace ecglab
