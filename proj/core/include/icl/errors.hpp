#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icl {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument is outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A model, training or run configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Label data outside the valid class range.
class DataError : public Error {
 public:
  using Error::Error;
};

// The phantom generator could not place its structures.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// A binary file failed to parse. Carries the byte offset of the failure.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace icl
