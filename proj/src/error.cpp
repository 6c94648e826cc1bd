#include "emrt/error.hpp"

namespace emrt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::OutOfRange: return "index out of range";
    case ErrorCode::Schema: return "schema violation";
    case ErrorCode::Io: return "i/o failure";
    case ErrorCode::NoVisibleLandmarks: return "no visible landmarks";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

}  // namespace emrt
