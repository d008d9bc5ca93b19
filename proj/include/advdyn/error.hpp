#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advdyn {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  InvalidProblem,
  UndefinedGeometry,
  InvalidInitialization,
  HandoffNotReady,
  ThresholdTooCoarse,
  Format,
  Io,
  Usage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::InvalidProblem: return "invalid-problem";
    case ErrorKind::UndefinedGeometry: return "undefined-geometry";
    case ErrorKind::InvalidInitialization: return "invalid-initialization";
    case ErrorKind::HandoffNotReady: return "handoff-not-ready";
    case ErrorKind::ThresholdTooCoarse: return "threshold-too-coarse";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

/// Every failure raised by the library carries a category so callers (and the
/// CLI exit path) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace detail
}  // namespace advdyn
