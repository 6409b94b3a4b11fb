#include "ecglab/signal/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ecglab/error.hpp"
#include "ecglab/random.hpp"

namespace ecglab {

namespace {

constexpr std::array<std::string_view, 42> kVocab = {
    ".",    "sinus", "bradycardia", "tachycardia", "normal", "rhythm", "heart", "rate",
    "bpm",  "ventricular", "regular", "with", "ecg",   "20",    "30",    "40",
    "50",   "60",    "70",   "80",    "90",   "100",   "110",   "120",
    "130",  "140",   "150",  "160",   "170",  "180",   "190",   "200",
    "210",  "220",   "230",  "240",   "250",  "260",   "270",   "280",
    "290",  "300"};

constexpr std::array<std::string_view, kNumRhythmClasses> kClassNames = {
    "bradycardia", "normal", "tachycardia"};
constexpr std::array<std::string_view, kNumRhythmClasses> kRhythmPhrases = {
    "sinus bradycardia", "normal sinus rhythm", "sinus tachycardia"};

}  // namespace

std::span<const std::string_view> vocabulary() { return kVocab; }
std::size_t vocab_size() { return kVocab.size(); }

std::uint32_t token_id(std::string_view word) {
  auto it = std::find(kVocab.begin(), kVocab.end(), word);
  if (it == kVocab.end()) throw VocabularyError("unknown token \"" + std::string(word) + "\"");
  return static_cast<std::uint32_t>(it - kVocab.begin());
}

ReportText tokenize(std::string_view raw) {
  ReportText out;
  out.raw = std::string(raw);
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.tokens.push_back(token_id(word));
      word.clear();
    }
  };
  for (char ch : raw) {
    if (ch == ' ' || ch == '\t' || ch == '\n') {
      flush();
    } else if (ch == '.') {
      flush();
      out.tokens.push_back(token_id("."));
    } else {
      word.push_back(ch);
    }
  }
  flush();
  if (out.tokens.empty()) throw VocabularyError("empty report");
  if (out.tokens.size() > kMaxReportTokens) {
    throw VocabularyError("report has " + std::to_string(out.tokens.size()) +
                          " tokens; limit is 32");
  }
  return out;
}

std::string_view class_name(std::size_t label) {
  if (label >= kNumRhythmClasses) throw LookupError("unknown class " + std::to_string(label));
  return kClassNames[label];
}

std::string_view rhythm_phrase(std::size_t label) {
  if (label >= kNumRhythmClasses) throw LookupError("unknown class " + std::to_string(label));
  return kRhythmPhrases[label];
}

ReportText make_report(std::size_t label, double heart_rate, Rng& rng) {
  const long rounded = std::clamp(std::lround(heart_rate / 10.0) * 10L, 20L, 300L);
  const std::string rate = std::to_string(rounded);
  const std::string phrase(rhythm_phrase(label));

  std::string raw;
  switch (rng.below(3)) {
    case 0:
      raw = phrase + ". heart rate " + rate + " bpm.";
      break;
    case 1:
      raw = phrase + ". ventricular rate " + rate + " bpm.";
      break;
    default:
      raw = phrase + " with regular rhythm. rate " + rate + " bpm.";
      break;
  }
  if (label == 1 && rng.bernoulli(0.3)) raw += " normal ecg.";
  return tokenize(raw);
}

ReportText class_prompt(std::size_t label) {
  return tokenize(std::string(rhythm_phrase(label)) + ".");
}

}  // namespace ecglab
