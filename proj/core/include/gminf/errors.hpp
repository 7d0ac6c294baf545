#pragma once

#include <stdexcept>
#include <string>

namespace gminf {

enum class ErrorKind {
  ShapeMismatch,
  NotPositiveDefinite,
  DivergedTraining,
  NonFiniteUpdate,
  TooFewSamples,
  DegenerateFit,
  ConfigInvalid,
  IoFailure,
  InvalidArgument,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GMINF_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what)                         \
        : Error(ErrorKind::Name, what) {}                          \
  };

GMINF_DEFINE_ERROR(ShapeMismatch)
GMINF_DEFINE_ERROR(NotPositiveDefinite)
GMINF_DEFINE_ERROR(DivergedTraining)
GMINF_DEFINE_ERROR(NonFiniteUpdate)
GMINF_DEFINE_ERROR(TooFewSamples)
GMINF_DEFINE_ERROR(DegenerateFit)
GMINF_DEFINE_ERROR(ConfigInvalid)
GMINF_DEFINE_ERROR(IoFailure)
GMINF_DEFINE_ERROR(InvalidArgument)

#undef GMINF_DEFINE_ERROR

}  // namespace gminf
