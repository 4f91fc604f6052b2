#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nomae {

enum class ErrorKind {
  EmptyInput,
  InvalidPoint,
  InvalidConfig,
  InvalidScale,
  ShapeError,
  AlignmentError,
  MissingParent,
  CoverageError,
  EmptyScale,
  NumericalError,
  FormatError,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and the CLI
// exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace nomae
