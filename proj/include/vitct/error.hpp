#pragma once

#include <stdexcept>
#include <string>

namespace vitct {

// Base for every error raised by the library. Each subclass maps onto one
// failure family so callers (the CLI in particular) can pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (model, training, preprocessing, policy).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A raster file exists but could not be decoded.
class DecodeError : public Error {
 public:
  DecodeError(std::string path, const std::string& what)
      : Error(what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Unsupported or malformed file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (e.g. NaN loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vitct
