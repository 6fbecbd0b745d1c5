#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlpgcn {

/// Category carried by every library exception. The CLI prints the code as a
/// machine-readable prefix and maps it to a process exit status.
enum class ErrorCode {
  Shape,
  Parameter,
  Data,
  Consistency,
  DegenerateInput,
  Config,
  Io,
};

std::string_view error_code_name(ErrorCode code) noexcept;
int error_exit_status(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error(ErrorCode::Shape, m) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& m) : Error(ErrorCode::Parameter, m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error(ErrorCode::Data, m) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& m) : Error(ErrorCode::Consistency, m) {}
};

/// Raised when a statistic is undefined for the input, e.g. a paired t-test
/// over two identical arms.
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& m)
      : Error(ErrorCode::DegenerateInput, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorCode::Config, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorCode::Io, m) {}
};

}  // namespace mlpgcn
