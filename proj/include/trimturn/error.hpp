#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trimturn {

enum class ErrorKind {
  ShapeMismatch,
  NonSPDWeight,
  EvaluatorFailure,
  SingularMatrix,
  NoConvergence,
  StepFailure,
  BlowUp,
  GridTooCoarse,
  NewtonStagnation,
  SingularShootingJacobian,
  SingularJacobian,
  WindowEmpty,
  DegenerateFit,
  LambdaMismatch,
  PoleProximity,
  RadiusCollapse,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonSPDWeight: return "NonSPDWeight";
    case ErrorKind::EvaluatorFailure: return "EvaluatorFailure";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::StepFailure: return "StepFailure";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::NewtonStagnation: return "NewtonStagnation";
    case ErrorKind::SingularShootingJacobian: return "SingularShootingJacobian";
    case ErrorKind::SingularJacobian: return "SingularJacobian";
    case ErrorKind::WindowEmpty: return "WindowEmpty";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::LambdaMismatch: return "LambdaMismatch";
    case ErrorKind::PoleProximity: return "PoleProximity";
    case ErrorKind::RadiusCollapse: return "RadiusCollapse";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace trimturn
