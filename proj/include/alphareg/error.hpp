#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alphareg {

enum class ErrorCode {
  // input data
  NegativeEntry,
  ZeroRow,
  InvalidDimension,
  DimensionMismatch,
  ShapeMismatch,
  MissingColumn,
  NonNumericCell,
  OutOfRangeCoordinate,
  InvalidParameters,
  // transforms
  InvalidAlpha,
  ZeroWithNonpositiveAlpha,
  ZeroWithLogRatio,
  OutOfImage,
  // solver
  NonFiniteResidual,
  SingularNormalEquations,
  NegativeWeight,
  // spatial
  InvalidK,
  NonpositiveBandwidth,
  DegenerateWeights,
  AllCoincident,
  // inference / scoring
  InterceptEffectRequested,
  SingularH,
  NotPositiveSemiDefinite,
  NonpositiveFitted,
  TooManyFailedReplicates,
};

std::string_view to_string(ErrorCode code);

// Broad grouping used by the CLI to choose an exit code.
enum class ErrorCategory { Usage, Data, Numerical };
ErrorCategory category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Warnings go to stderr unless silenced; tests silence them.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace alphareg
