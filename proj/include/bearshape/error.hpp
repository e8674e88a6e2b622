#pragma once

#include <stdexcept>
#include <string>

namespace bearshape {

enum class ErrorCode {
  kCoincidentAgents,
  kDomain,
  kDegenerate,
  kInvalidArgument,
  kGuardFailure,
  kInfeasibleStart,
  kRejectionExhausted,
  kParse,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCoincidentAgents: return "coincident_agents";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kGuardFailure: return "guard_failure";
    case ErrorCode::kInfeasibleStart: return "infeasible_start";
    case ErrorCode::kRejectionExhausted: return "rejection_exhausted";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

/// Library-wide exception; `code()` is stable and machine readable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bearshape
