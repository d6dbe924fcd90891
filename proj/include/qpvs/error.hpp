#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace qpvs {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  NonFinite,
  DimensionMismatch,
  DuplicateColumnName,
  MissingColumn,
  TooManyPredictors,
  NonPositiveDispersion,
  InsufficientSamples,
  WrongFamily,
  LengthMismatch,
  NotNested,
  TooFewBins,
  OptimizerDiverged,
  SingularHessian,
  SingularU,
};

const char* to_string(ErrorCode code) noexcept;

/// True for failures of the numerical machinery (as opposed to bad input).
bool is_numeric_failure(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Error(ErrorCode code, const std::string& what, std::size_t row, std::optional<std::size_t> col)
      : std::runtime_error(what), code_(code), row_(row), col_(col) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> row() const noexcept { return row_; }
  // Empty for the response column.
  std::optional<std::size_t> col() const noexcept { return col_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> row_;
  std::optional<std::size_t> col_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace qpvs
