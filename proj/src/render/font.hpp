#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace ecglab::detail {

// 5x7 bitmap glyphs; one byte per row, bit 4 is the leftmost column.
using Glyph = std::array<std::uint8_t, 7>;

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

inline std::optional<Glyph> glyph(char c) {
  switch (c) {
    case 'I': return Glyph{0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E};
    case 'V': return Glyph{0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04};
    case 'a': return Glyph{0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F};
    case 'R': return Glyph{0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11};
    case 'L': return Glyph{0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F};
    case 'F': return Glyph{0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10};
    case '0': return Glyph{0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E};
    case '1': return Glyph{0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E};
    case '2': return Glyph{0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F};
    case '3': return Glyph{0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E};
    case '4': return Glyph{0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02};
    case '5': return Glyph{0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E};
    case '6': return Glyph{0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E};
    case '7': return Glyph{0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08};
    case '8': return Glyph{0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E};
    case '9': return Glyph{0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C};
    default: return std::nullopt;
  }
}

}  // namespace ecglab::detail
