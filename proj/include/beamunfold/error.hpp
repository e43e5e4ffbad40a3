#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace beamunfold {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  ShapeMismatch,
  NonFinite,
  NotHermitian,
  NotPositiveDefinite,
  NotScalar,
  NonPositiveDistance,
  NonPositiveStepsize,
  BracketFailure,
  MulticellUnsupported,
  IoError,
  FormatError,
  FormatVersionMismatch,
  ChecksumMismatch,
  EmptyDataset,
  DivergedTraining,
  WidthMismatch,
  ConfigError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace beamunfold
