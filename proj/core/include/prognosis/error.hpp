#pragma once

#include <stdexcept>
#include <string>

namespace prognosis {

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when tensor shapes or model configurations disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised for malformed files (PGM, CSV, checkpoints, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace prognosis
