#pragma once

#include <stdexcept>
#include <string>

namespace ecglab {

/// Category of a library failure. The CLI maps categories onto exit codes.
enum class ErrorKind {
  kParameter,
  kShape,
  kParse,
  kDomain,
  kContract,
  kLifecycle,
  kDivergence,
  kIo,
  kLookup,
  kChecksum,
  kData,
  kVocabulary,
  kUndefined,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define ECGLAB_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(Kind, message) {}   \
  };

ECGLAB_DEFINE_ERROR(ParameterError, ErrorKind::kParameter)
ECGLAB_DEFINE_ERROR(ShapeError, ErrorKind::kShape)
ECGLAB_DEFINE_ERROR(ParseError, ErrorKind::kParse)
ECGLAB_DEFINE_ERROR(DomainError, ErrorKind::kDomain)
ECGLAB_DEFINE_ERROR(ContractError, ErrorKind::kContract)
ECGLAB_DEFINE_ERROR(LifecycleError, ErrorKind::kLifecycle)
ECGLAB_DEFINE_ERROR(DivergenceError, ErrorKind::kDivergence)
ECGLAB_DEFINE_ERROR(IoError, ErrorKind::kIo)
ECGLAB_DEFINE_ERROR(LookupError, ErrorKind::kLookup)
ECGLAB_DEFINE_ERROR(ChecksumError, ErrorKind::kChecksum)
ECGLAB_DEFINE_ERROR(DataError, ErrorKind::kData)
ECGLAB_DEFINE_ERROR(VocabularyError, ErrorKind::kVocabulary)
ECGLAB_DEFINE_ERROR(UndefinedError, ErrorKind::kUndefined)

#undef ECGLAB_DEFINE_ERROR

}  // namespace ecglab
