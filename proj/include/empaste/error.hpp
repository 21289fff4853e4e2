#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace empaste {

// Every failure mode surfaced by the library. Values are stable: the C API
// returns them as integers.
enum class ErrorCode : int {
  Ok = 0,
  InvalidArgument = 1,
  EmptyMask = 2,
  DegenerateResult = 3,
  DimensionMismatch = 4,
  UnknownSegmentId = 5,
  MalformedFile = 6,
  EmptyActivation = 7,
  TooFewSamples = 8,
  PlacementImpossible = 9,
  NoFreeSpace = 10,
  NonConvergence = 11,
  EmptyPool = 12,
  MissingScore = 13,
  InvalidSpec = 14,
  MalformedRle = 15,
  ParseError = 16,
  MissingAsset = 17,
  DuplicateImageId = 18,
  IoError = 19,
  Internal = 20,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // what() without the code name prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace empaste
