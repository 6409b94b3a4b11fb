#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ecglab/losses/losses.hpp"
#include "ecglab/models/models.hpp"

namespace ecglab {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
  bool operator==(const CheckpointTensor&) const = default;
};

/// Named tensors plus bookkeeping. Bookkeeping travels as ordinary entries
/// under "meta/" so the file holds nothing but tensors and a checksum.
struct Checkpoint {
  std::map<std::string, CheckpointTensor> tensors;
  std::uint64_t step = 0;
  float val_loss = 0.0f;
  std::uint64_t config_hash = 0;
  bool operator==(const Checkpoint&) const = default;
};

/// "ECSK", u16 version, u32 entry count, entries (u32 name length, name,
/// u32 ndim, u32 dims..., f32 data), then a CRC-32 of everything before it.
/// All integers and floats little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws ChecksumError on a CRC mismatch and ParseError on malformed bytes.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Student and teacher parameters ("student/...", "teacher/...") and the two
/// temperatures ("temperature/s_ctr", "temperature/s_gram").
Checkpoint snapshot(const AlignmentModel<float>& model, const Temperatures<float>& temps, std::uint64_t step,
                    float val_loss, std::uint64_t config_hash);
/// Inverse of snapshot; the teachers come back frozen. Throws LookupError for
/// a missing tensor and ShapeError for a shape mismatch.
void restore(const Checkpoint& ckpt, AlignmentModel<float>& model, Temperatures<float>* temps);

}  // namespace ecglab
