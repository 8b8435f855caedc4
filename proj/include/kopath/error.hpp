#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kopath {

enum class ErrorKind {
  BadShape,
  DegenerateData,
  IoError,
  FormatError,
  BadGrid,
  OutOfRange,
  SingularEndpoint,
  Inconsistent,
  NonFinite,
  GammaNonpositive,
  NoBracket,
  SnrNotMonotone,
  Diverged,
  TooFewSamples,
  EmptySeries,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and the CLI)
// can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace kopath
