#pragma once

#include <stdexcept>
#include <string>

namespace ssdu {

// Every error raised by the library derives from Error so callers can catch
// one type; the subclasses mirror the failure categories callers act on.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ParameterError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct NormalizationError : Error {
  using Error::Error;
};

struct SplitError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct FormatError : Error {
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace ssdu
