#include "alphareg/error.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace alphareg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::OutOfRangeCoordinate: return "OutOfRangeCoordinate";
    case ErrorCode::InvalidParameters: return "InvalidParameters";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::ZeroWithNonpositiveAlpha: return "ZeroWithNonpositiveAlpha";
    case ErrorCode::ZeroWithLogRatio: return "ZeroWithLogRatio";
    case ErrorCode::OutOfImage: return "OutOfImage";
    case ErrorCode::NonFiniteResidual: return "NonFiniteResidual";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NonpositiveBandwidth: return "NonpositiveBandwidth";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::AllCoincident: return "AllCoincident";
    case ErrorCode::InterceptEffectRequested: return "InterceptEffectRequested";
    case ErrorCode::SingularH: return "SingularH";
    case ErrorCode::NotPositiveSemiDefinite: return "NotPositiveSemiDefinite";
    case ErrorCode::NonpositiveFitted: return "NonpositiveFitted";
    case ErrorCode::TooManyFailedReplicates: return "TooManyFailedReplicates";
  }
  return "Unknown";
}

ErrorCategory category(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameters:
    case ErrorCode::InvalidAlpha:
    case ErrorCode::InvalidK:
    case ErrorCode::NonpositiveBandwidth:
    case ErrorCode::InterceptEffectRequested:
      return ErrorCategory::Usage;
    case ErrorCode::NegativeEntry:
    case ErrorCode::ZeroRow:
    case ErrorCode::InvalidDimension:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::MissingColumn:
    case ErrorCode::NonNumericCell:
    case ErrorCode::OutOfRangeCoordinate:
    case ErrorCode::ZeroWithNonpositiveAlpha:
    case ErrorCode::ZeroWithLogRatio:
    case ErrorCode::AllCoincident:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Numerical;
  }
}

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
}  // namespace

void warn(const std::string& message) {
  if (!g_warnings.load()) return;
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

}  // namespace alphareg
