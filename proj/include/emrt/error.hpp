#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emrt {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  OutOfRange,
  Schema,
  Io,
  NoVisibleLandmarks,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. The message names the first violated
/// invariant; `code()` classifies it for callers that branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace emrt
