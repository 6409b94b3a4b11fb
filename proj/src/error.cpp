#include "ecglab/error.hpp"

namespace ecglab {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kLifecycle: return "lifecycle";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kData: return "data";
    case ErrorKind::kVocabulary: return "vocabulary";
    case ErrorKind::kUndefined: return "undefined";
  }
  return "unknown";
}

}  // namespace ecglab
