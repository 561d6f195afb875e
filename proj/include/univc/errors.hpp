#pragma once

#include <stdexcept>
#include <string>

namespace univc {

enum class ErrorKind {
  InvalidParameter,
  SingularCovariance,
  DegenerateData,
  InvalidSplit,
  OptimizationFailure,
  NotJointlyDiagonalizable,
  InvalidDesign,
  DimensionMismatch,
  Parse,
  Usage,
};

const char* to_string(ErrorKind kind);

/// Base class for every error raised by the library. The kind drives the
/// command-line exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define UNIVC_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                         \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

UNIVC_DEFINE_ERROR(InvalidParameterError, InvalidParameter)
UNIVC_DEFINE_ERROR(SingularCovarianceError, SingularCovariance)
UNIVC_DEFINE_ERROR(DegenerateDataError, DegenerateData)
UNIVC_DEFINE_ERROR(InvalidSplitError, InvalidSplit)
UNIVC_DEFINE_ERROR(OptimizationFailureError, OptimizationFailure)
UNIVC_DEFINE_ERROR(NotJointlyDiagonalizableError, NotJointlyDiagonalizable)
UNIVC_DEFINE_ERROR(InvalidDesignError, InvalidDesign)
UNIVC_DEFINE_ERROR(DimensionMismatchError, DimensionMismatch)
UNIVC_DEFINE_ERROR(ParseError, Parse)
UNIVC_DEFINE_ERROR(UsageError, Usage)

#undef UNIVC_DEFINE_ERROR

}  // namespace univc
