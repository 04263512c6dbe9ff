#pragma once

#include <stdexcept>
#include <string>

namespace tlmn {

/// Base of every error raised by the library. `kind()` is a stable
/// lowercase tag used in machine-readable CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TLMN_DEFINE_ERROR(Name, tag)                                    \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  }

TLMN_DEFINE_ERROR(DomainError, "domain");
TLMN_DEFINE_ERROR(ShapeError, "shape");
TLMN_DEFINE_ERROR(DataError, "data");
TLMN_DEFINE_ERROR(ConfigError, "config");
TLMN_DEFINE_ERROR(ParseError, "parse");
TLMN_DEFINE_ERROR(FetchError, "fetch");
TLMN_DEFINE_ERROR(IntegrityError, "integrity");
TLMN_DEFINE_ERROR(CheckpointError, "checkpoint");
TLMN_DEFINE_ERROR(TrainingError, "training");
TLMN_DEFINE_ERROR(StateError, "state");
TLMN_DEFINE_ERROR(EvaluationError, "evaluation");

#undef TLMN_DEFINE_ERROR

}  // namespace tlmn
