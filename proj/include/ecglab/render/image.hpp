#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ecglab/signal/record.hpp"

namespace ecglab {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool overlaps(const PixelBox& o) const noexcept {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
  bool operator==(const PixelBox&) const = default;
};

struct PanelInfo {
  std::string id;  // lead name, or "rhythm" for the full-length lead II strip
  Lead lead = Lead::I;
  PixelBox box;
  double t_start = 0.0;  // seconds
  double t_end = 0.0;
  int baseline_y = 0;
  PixelBox label_box;  // empty when labels are off

  bool operator==(const PanelInfo&) const = default;
};

/// One sampled augmentation transform, recorded whether or not it fired.
struct AugmentStep {
  std::string transform;
  bool applied = false;
  std::vector<double> params;

  bool operator==(const AugmentStep&) const = default;
};

struct RenderMeta {
  std::string config_hash;
  int px_per_mm = 0;
  double paper_speed = 0.0;  // mm/s
  double gain = 0.0;         // mm/mV
  std::vector<PanelInfo> panels;
  std::vector<AugmentStep> augment_trace;

  const PanelInfo& panel(const std::string& id) const;  // throws LookupError
  bool operator==(const RenderMeta&) const = default;
};

/// RGB8 raster, row-major, 3 bytes per pixel.
struct EcgImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  RenderMeta meta;

  std::uint8_t* at(int x, int y) noexcept {
    return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                            static_cast<std::size_t>(x)) * 3;
  }
  const std::uint8_t* at(int x, int y) const noexcept {
    return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                            static_cast<std::size_t>(x)) * 3;
  }
};

}  // namespace ecglab
