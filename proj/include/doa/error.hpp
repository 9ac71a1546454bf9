#pragma once

#include <stdexcept>
#include <string>

namespace doa {

enum class ErrorKind {
  InvalidGeometry,
  Aliasing,
  GridTooSmall,
  SamplingFailure,
  InvalidArgument,
  Divergence,
  Numerical,
  StructureViolation,
  NearSingular,
  Contract,
  UndefinedLoss,
  Config,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidGeometry: return "invalid-geometry";
    case ErrorKind::Aliasing: return "aliasing";
    case ErrorKind::GridTooSmall: return "grid-too-small";
    case ErrorKind::SamplingFailure: return "sampling-failure";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::StructureViolation: return "structure-violation";
    case ErrorKind::NearSingular: return "near-singular";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::UndefinedLoss: return "undefined-loss";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace doa
