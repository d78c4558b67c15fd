#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tjaidl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidShapeError : public Error {
 public:
  using Error::Error;
};

class NumericOverflowError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Raised when target-domain labels reach the unsupervised adaptation path.
class LabelLeakError : public Error {
 public:
  using Error::Error;
};

class MissingCheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace tjaidl
