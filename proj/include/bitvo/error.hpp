#pragma once

#include <stdexcept>
#include <string>

namespace bitvo {

enum class Errc {
  invalid_argument,
  invalid_depth,
  ambiguous_rotation,
  empty_selection,
  degenerate_system,
  degraded_keyframe,
  missing_depth,
  io_error,
  parse_error,
};

inline const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::invalid_depth: return "invalid-depth";
    case Errc::ambiguous_rotation: return "ambiguous-rotation";
    case Errc::empty_selection: return "empty-selection";
    case Errc::degenerate_system: return "degenerate-system";
    case Errc::degraded_keyframe: return "degraded-keyframe";
    case Errc::missing_depth: return "missing-depth";
    case Errc::io_error: return "io-error";
    case Errc::parse_error: return "parse-error";
  }
  return "unknown";
}

/// Exception type thrown by all bitvo operations. The error category is
/// available through code() so callers can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace bitvo
