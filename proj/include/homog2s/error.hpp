#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace homog2s {

enum class ErrorKind {
  ParameterOutOfRange,
  DegenerateJacobian,
  NoConvergence,
  MisalignedGrid,
  ResolutionMismatch,
  NonFiniteCoefficient,
  NegativeReaction,
  MaxIterationsExceeded,
  InvertedElement,
  CoercivityViolation,
  Tiling,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// All library failures surface as this exception; `kind()` carries the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace homog2s
