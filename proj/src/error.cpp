#include "nomae/error.hpp"

namespace nomae {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidPoint: return "InvalidPoint";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidScale: return "InvalidScale";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::MissingParent: return "MissingParent";
    case ErrorKind::CoverageError: return "CoverageError";
    case ErrorKind::EmptyScale: return "EmptyScale";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace nomae
