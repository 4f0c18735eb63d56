#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bugsem {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with input data (corpus records, dumps, feature files). The CLI
/// maps these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments to an operation (k out of range, too-short path, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class UnparseableSource : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  SchemaError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit SchemaError(const std::string& what) : DataError(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class LabelError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class CorruptTensor : public DataError {
 public:
  using DataError::DataError;
};

class MissingFile : public DataError {
 public:
  using DataError::DataError;
};

class MisalignedDump : public DataError {
 public:
  using DataError::DataError;
};

class LengthMismatch : public DataError {
 public:
  using DataError::DataError;
};

class EmptyLabelClass : public DataError {
 public:
  using DataError::DataError;
};

class TooFewLayers : public DataError {
 public:
  using DataError::DataError;
};

class BothEmpty : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

class KOutOfRange : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

class PathTooShort : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

class NoHighAttention : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

class ModeMismatch : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

}  // namespace bugsem
