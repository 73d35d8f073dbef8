#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vmsim {

/// Failure categories raised by the solver modules. The CLI maps each
/// category onto a distinct process exit code.
enum class ErrorKind {
  CflViolation,
  NegativeDensity,
  NonDiagonalMaterial,
  SpdViolation,
  ContainerNotVacuum,
  ToleranceUnreachable,
  InitialConstraintViolation,
  CounterexampleFound,
  ParseError,
  ValidationError,
  ChecksumMismatch,
  ShapeMismatch,
  MissingHistory,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a time step exceeds the stability limit; carries the largest
/// admissible step so callers can report or retry with it.
class CflError : public Error {
 public:
  CflError(const std::string& where, double dt, double dt_max)
      : Error(ErrorKind::CflViolation,
              where + ": dt=" + std::to_string(dt) + " exceeds the stable limit dt<=" +
                  std::to_string(dt_max)),
        dt_(dt),
        dt_max_(dt_max) {}

  double dt() const noexcept { return dt_; }
  double dt_max() const noexcept { return dt_max_; }

 private:
  double dt_;
  double dt_max_;
};

}  // namespace vmsim
