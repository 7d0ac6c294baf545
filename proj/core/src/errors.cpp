#include "gminf/errors.hpp"

namespace gminf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace gminf
