#pragma once

#include <stdexcept>
#include <string>

namespace securepose {

// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  kInput = 1,
  kParse,
  kSchema,
  kGeometry,
  kGap,
  kIo,
  kContract,
  kNotFound,
  kConflict,
  kValidation,
  kNotReady,
  kNoPatient,
  kStep,
  kPrivacy,
  kAlignment,
  kUndefinedAp,
  kUnrecoverable,
  kStartup,
  kInternal,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace securepose
