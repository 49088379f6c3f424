#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrt {

enum class ErrorCode {
  NotHermitian,
  DimMismatch,
  InvalidP,
  NonPositiveEpsilon,
  FluxIncommensurate,
  RequiresCleanModel,
  GapClosure,
  RangeExceedsHalfTorus,
  NonPositiveBeta,
  FermiOnEigenvalue,
  NonPositiveStep,
  NotEquilibrium,
  StepTooLarge,
  UnsupportedModulation,
  DiagonalObstruction,
  NotSpectralProjection,
  BoxExceedsTorus,
  NonPositiveN,
  InvalidArgument,
  ConfigError,
  IoError,
};

std::string_view error_name(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI's per-row error column) can react to it by name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lrt
