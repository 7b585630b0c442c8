#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nlts {

enum class ErrorCode {
  kNotPositiveDefinite,
  kConvergenceFailure,
  kInvalidParameter,
  kDimensionMismatch,
  kEmptyBuffer,
  kInvalidArm,
  kSolverDiverged,
  kNotInvertible,
  kParseError,
  kUnknownLabel,
  kExhausted,
  kWindowOverrun,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::kInvalidParameter: return "InvalidParameter";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyBuffer: return "EmptyBuffer";
    case ErrorCode::kInvalidArm: return "InvalidArm";
    case ErrorCode::kSolverDiverged: return "SolverDiverged";
    case ErrorCode::kNotInvertible: return "NotInvertible";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kExhausted: return "Exhausted";
    case ErrorCode::kWindowOverrun: return "WindowOverrun";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

// Every failure raised by the library carries a code so callers (and tests)
// can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace nlts
