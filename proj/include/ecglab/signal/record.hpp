#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace ecglab {

inline constexpr std::size_t kNumLeads = 12;

/// Canonical lead order; the enumerator value is the row index in an EcgRecord.
enum class Lead : std::size_t { I, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6 };

inline constexpr std::array<std::string_view, kNumLeads> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

constexpr std::size_t index(Lead lead) noexcept { return static_cast<std::size_t>(lead); }
constexpr std::string_view name(Lead lead) noexcept { return kLeadNames[index(lead)]; }

/// 12-lead recording in millivolts, stored lead-major (all of lead I, then II, ...).
class EcgRecord {
 public:
  EcgRecord() = default;

  /// Validates shape, sampling rate and finiteness; throws ParameterError.
  EcgRecord(double fs, std::size_t n_samples, std::vector<float> samples);

  static EcgRecord zeros(double fs, std::size_t n_samples);

  double fs() const noexcept { return fs_; }
  std::size_t n_samples() const noexcept { return n_samples_; }
  double duration() const noexcept { return static_cast<double>(n_samples_) / fs_; }

  std::span<const float> lead(Lead l) const noexcept { return lead(index(l)); }
  std::span<float> lead(Lead l) noexcept { return lead(index(l)); }
  std::span<const float> lead(std::size_t row) const noexcept {
    return {samples_.data() + row * n_samples_, n_samples_};
  }
  std::span<float> lead(std::size_t row) noexcept {
    return {samples_.data() + row * n_samples_, n_samples_};
  }

  std::span<const float> samples() const noexcept { return samples_; }

  bool operator==(const EcgRecord&) const = default;

 private:
  double fs_ = 0.0;
  std::size_t n_samples_ = 0;
  std::vector<float> samples_;
};

/// Linear-interpolation resampling; T' = round(duration * fs_target).
EcgRecord resample(const EcgRecord& record, double fs_target);

/// Writes the "ECGR v1" pair: `path` (JSON header) plus a raw f32le data file
/// placed next to it and named `<stem>.f32`.
void save_record(const EcgRecord& record, const std::filesystem::path& path);

/// Reads an ECGR header (and its data file) or, when the extension is .csv,
/// a CSV with a header row of lead names and one column per lead.
EcgRecord load_record(const std::filesystem::path& path);

EcgRecord load_record_csv(const std::filesystem::path& path);
void save_record_csv(const EcgRecord& record, const std::filesystem::path& path);

}  // namespace ecglab
