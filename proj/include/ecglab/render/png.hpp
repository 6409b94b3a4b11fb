#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecglab/render/image.hpp"

namespace ecglab {

/// RGB8, non-interlaced, filter 0 on every row, zlib level 6, chunks
/// IHDR / IDAT / IEND only, so identical pixels always give identical bytes.
std::vector<std::uint8_t> encode_png(const EcgImage& image);

/// Decodes 8-bit RGB non-interlaced PNGs (any row filter). Pixels only.
EcgImage decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const EcgImage& image, const std::filesystem::path& path);
EcgImage read_png(const std::filesystem::path& path);

/// Sidecar metadata JSON {config_hash, panels, time windows, augmentation trace}.
void write_sidecar(const EcgImage& image, const std::filesystem::path& path);
RenderMeta read_sidecar(const std::filesystem::path& path);

}  // namespace ecglab
