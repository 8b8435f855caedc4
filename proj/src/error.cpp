#include "kopath/error.hpp"

namespace kopath {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadShape: return "BadShape";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::BadGrid: return "BadGrid";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::SingularEndpoint: return "SingularEndpoint";
    case ErrorKind::Inconsistent: return "Inconsistent";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::GammaNonpositive: return "GammaNonpositive";
    case ErrorKind::NoBracket: return "NoBracket";
    case ErrorKind::SnrNotMonotone: return "SnrNotMonotone";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::EmptySeries: return "EmptySeries";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace kopath
