#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace semb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Inputs for which a quantity is undefined (zero norm, constant sequence, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Binary file errors. Each failure mode has its own type.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public FormatError {
 public:
  UnsupportedVersionError(std::uint32_t found, std::uint32_t supported)
      : FormatError("unsupported format version " + std::to_string(found) +
                    " (supported: " + std::to_string(supported) + ")"),
        found_(found) {}
  std::uint32_t found() const { return found_; }

 private:
  std::uint32_t found_;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Malformed dataset record. `line` is 1-based.
class DataFormatError : public Error {
 public:
  DataFormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

// Checkpoint/store that does not fit the requested use (e.g. dimension mismatch).
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace semb
