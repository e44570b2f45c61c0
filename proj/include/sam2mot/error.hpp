#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sam2mot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate a precondition (dimension or grid
/// mismatch, NaN scores, out-of-order frames, unknown handles ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A run-length encoded mask whose runs do not describe its grid.
class CorruptMaskError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A segmentation backend failed while processing `frame()`.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, long frame)
      : Error("frame " + std::to_string(frame) + ": " + what), frame_(frame) {}

  long frame() const noexcept { return frame_; }

 private:
  long frame_;
};

}  // namespace sam2mot
