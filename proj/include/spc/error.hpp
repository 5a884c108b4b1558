#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spc {

enum class ErrorCode {
  // input validation
  DimensionMismatch,
  NonBinaryTreatment,
  NonFiniteValue,
  DegenerateTreatmentArm,
  TooFewUnits,
  InfeasibleStratification,
  DegenerateData,
  NonSymmetric,
  InvalidArgument,
  MismatchedUnits,
  EmptyInput,
  RelevanceViolation,
  NonPositivePilot,
  NoTreatedUnits,
  UnknownFlag,
  MissingColumn,
  ConflictingOptions,
  ParseError,
  FileNotFound,
  // numerical failures
  ZeroDenominator,
  AllCandidatesFailed,
  RankDeficientDesign,
  Infeasible,
  NumericalFailure,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for error families caused by bad user input (CLI exit code 1);
/// false for numerical failures (exit code 2).
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace spc
