#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ecglab/render/image.hpp"
#include "ecglab/signal/record.hpp"

namespace ecglab {

enum class GridStyle { kFineRed, kCoarseGray, kNone };

std::string_view to_string(GridStyle style);
GridStyle grid_style_from_string(std::string_view s);  // throws ParameterError

struct Margins {
  double left = 10.0, right = 10.0, top = 10.0, bottom = 10.0;  // mm
};

struct RenderConfig {
  int px_per_mm = 8;
  double paper_speed = 25.0;  // mm/s
  double gain = 10.0;         // mm/mV
  Margins margins;
  GridStyle grid_style = GridStyle::kFineRed;
  bool show_labels = true;
  bool show_calibration_pulse = false;
  std::uint64_t seed = 0;

  void validate() const;
  /// Hash of the canonical JSON form; recorded in image metadata.
  std::string hash() const;
};

/// Layout constants of the printout.
inline constexpr double kPrintDuration = 10.0;  // seconds rendered
inline constexpr double kPanelDuration = 2.5;   // seconds per grid panel
inline constexpr double kRowHeightMm = 30.0;
inline constexpr double kBaselineFromRowTopMm = 18.0;
inline constexpr int kGridRows = 3;
inline constexpr int kGridCols = 4;

int image_width_px(const RenderConfig& config);
int image_height_px(const RenderConfig& config);

/// 3x4 panels plus the lead II rhythm strip. The first 10 s of the record are
/// drawn; shorter records throw ParameterError ("duration").
EcgImage render(const EcgRecord& record, const RenderConfig& config);

/// Panel layout alone (no pixels), as recorded in EcgImage::meta.
std::vector<PanelInfo> layout_panels(const RenderConfig& config);

/// Recovers one value (mV) per pixel column of a panel from an un-augmented
/// render: the median row among the darkest ink pixels, mapped back through
/// the vertical calibration. Columns without ink repeat the previous value.
std::vector<double> extract_centerline(const EcgImage& image, const std::string& panel_id);

/// Ink pixels: luminance below this value. Grid colours sit well above it.
inline constexpr int kInkLuminance = 96;

inline int luminance(const std::uint8_t* rgb) noexcept {
  return (299 * rgb[0] + 587 * rgb[1] + 114 * rgb[2]) / 1000;
}

}  // namespace ecglab
