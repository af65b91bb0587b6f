#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace assr {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed a value outside an operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor or image shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A byte stream could not be parsed. Carries the offset of the first bad byte.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// The stream ended before the parser was done.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised by the training loop when a loss goes non-finite.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace assr
