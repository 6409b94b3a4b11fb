#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecglab {

class Rng;

inline constexpr std::size_t kMaxReportTokens = 32;
inline constexpr std::size_t kNumRhythmClasses = 3;

/// Closed report vocabulary (< 64 entries). Token ids index this table.
std::span<const std::string_view> vocabulary();
std::size_t vocab_size();

/// Token id of `word`; throws VocabularyError for unknown words.
std::uint32_t token_id(std::string_view word);

/// Clinical report in the closed vocabulary.
struct ReportText {
  std::vector<std::uint32_t> tokens;
  std::string raw;

  bool operator==(const ReportText&) const = default;
};

/// Splits on whitespace, treating '.' as its own token; validates against the
/// vocabulary and the 32-token limit.
ReportText tokenize(std::string_view raw);

/// Class names: 0 bradycardia, 1 normal, 2 tachycardia.
std::string_view class_name(std::size_t label);

/// Rhythm phrase for a class, e.g. "sinus bradycardia".
std::string_view rhythm_phrase(std::size_t label);

/// Samples one report from the template grammar. The rate is printed rounded
/// to the nearest 10 bpm and clamped to the vocabulary's 20..300 range.
ReportText make_report(std::size_t label, double heart_rate, Rng& rng);

/// Zero-shot class prompt: the rhythm phrase followed by a period.
ReportText class_prompt(std::size_t label);

}  // namespace ecglab
