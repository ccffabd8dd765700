#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xaudit {

/// Base of every error raised by the toolkit. The CLI maps the concrete type
/// to its process exit code (1 config, 2 data, 3 runtime/numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 3; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : DataError(what), row_(row), column_(column) {}

  /// 1-based data row (header excluded) and 1-based column.
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DegenerateTrainingError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class UndefinedRatioError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace xaudit
